//! Option files: TOML keys become command-line flags placed before the user's
//! own arguments, so flags given explicitly win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

/// Where `--config` points, if anywhere in `argv`.
pub fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Index of the subcommand token: the first bare word that is not the value of
/// a global option.
fn subcommand_index(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if s == "--config" {
            i += 2;
            continue;
        }
        if s.starts_with('-') {
            if s.starts_with("--config=") || s == "--json" {
                i += 1;
                continue;
            }
            return None;
        }
        return Some(i);
    }
    None
}

fn flag_tokens(key: &str, value: &toml::Value, out: &mut Vec<OsString>) -> anyhow::Result<()> {
    let flag = format!("--{}", key.replace('_', "-"));
    match value {
        toml::Value::Boolean(true) => out.push(flag.into()),
        toml::Value::Boolean(false) => {}
        toml::Value::String(s) => out.extend([flag.into(), s.into()]),
        toml::Value::Integer(i) => out.extend([flag.into(), i.to_string().into()]),
        toml::Value::Float(f) => out.extend([flag.into(), f.to_string().into()]),
        toml::Value::Array(items) => {
            for item in items {
                flag_tokens(key, item, out)?;
            }
        }
        other => bail!("config key `{key}` has unsupported value {other}"),
    }
    Ok(())
}

/// Flags for `command` from a parsed config table: top-level scalars, then the
/// section named after the command.
pub fn config_flags(table: &toml::Table, command: &str) -> anyhow::Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (key, value) in table {
        if !value.is_table() && key != "config" && key != "json" {
            flag_tokens(key, value, &mut out)?;
        }
    }
    if let Some(section) = table.get(command) {
        let section = section
            .as_table()
            .with_context(|| format!("config key `{command}` must be a section"))?;
        for (key, value) in section {
            flag_tokens(key, value, &mut out)?;
        }
    }
    Ok(out)
}

pub fn load_table(path: &Path) -> anyhow::Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<toml::Table>()
        .with_context(|| format!("parsing config {}", path.display()))
}

/// `argv` with the config flags spliced in right after the subcommand.
pub fn expand(argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let (Some(path), Some(idx)) = (config_path(&argv), subcommand_index(&argv)) else {
        return Ok(argv);
    };
    let table = load_table(&path)?;
    let command = argv[idx].to_string_lossy().into_owned();
    let flags = config_flags(&table, &command)?;
    let mut out = argv[..=idx].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[idx + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<OsString> {
        s.split_whitespace().map(OsString::from).collect()
    }

    #[test]
    fn finds_config_before_or_after_the_subcommand() {
        assert_eq!(config_path(&argv("q --config a.toml train")), Some("a.toml".into()));
        assert_eq!(config_path(&argv("q train --config=b.toml")), Some("b.toml".into()));
        assert_eq!(config_path(&argv("q train")), None);
        assert_eq!(subcommand_index(&argv("q --config a.toml --json train --x")), Some(4));
        assert_eq!(subcommand_index(&argv("q --help")), None);
    }

    #[test]
    fn section_values_follow_top_level_values() {
        let table: toml::Table =
            "seed = 3\nverbose = false\n[train]\nmax_iters = 5\noptimizer = \"cg\"\n[maxlik]\nseed = 9\n"
                .parse()
                .unwrap();
        let flags: Vec<String> = config_flags(&table, "train")
            .unwrap()
            .into_iter()
            .map(|s| s.into_string().unwrap())
            .collect();
        assert_eq!(flags, ["--seed", "3", "--max-iters", "5", "--optimizer", "cg"]);
    }
}
