//! `--config` files: TOML keys become long flags placed ahead of the
//! command-line ones, so explicit flags win.

use std::ffi::OsString;
use std::fmt;

const SUBCOMMANDS: [&str; 5] = ["reflect", "turning-points", "sweep", "localize", "validate"];
const VALUED_GLOBALS: [&str; 2] = ["--threads", "--config"];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(rest.into());
        }
    }
    None
}

/// Index of the subcommand token, skipping values of global options.
fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut j = 1;
    while j < args.len() {
        let a = args[j].to_str().unwrap_or("");
        if VALUED_GLOBALS.contains(&a) {
            j += 2;
            continue;
        }
        if SUBCOMMANDS.contains(&a) {
            return Some(j);
        }
        j += 1;
    }
    None
}

fn flag_name(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

fn push_value(out: &mut Vec<OsString>, key: &str, value: &toml::Value) -> Result<(), ConfigError> {
    let flag = flag_name(key);
    match value {
        toml::Value::Boolean(true) => out.push(flag.into()),
        toml::Value::Boolean(false) => {}
        toml::Value::String(s) => {
            out.push(flag.into());
            out.push(s.into());
        }
        toml::Value::Integer(i) => {
            out.push(flag.into());
            out.push(i.to_string().into());
        }
        toml::Value::Float(x) => {
            out.push(flag.into());
            out.push(x.to_string().into());
        }
        _ => {
            return Err(ConfigError(format!(
                "config key `{key}` must be a string, number or boolean"
            )))
        }
    }
    Ok(())
}

/// Command line with the config file's flags spliced in after the subcommand.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| ConfigError(format!("invalid config {}: {e}", path.to_string_lossy())))?;

    let mut args = args;
    let at = match subcommand_index(&args) {
        Some(j) => j,
        None => match table.get("command") {
            Some(toml::Value::String(c)) if SUBCOMMANDS.contains(&c.as_str()) => {
                args.push(c.into());
                args.len() - 1
            }
            Some(_) => return Err(ConfigError("config `command` is not a known subcommand".into())),
            None => return Ok(args),
        },
    };
    let command = args[at].to_str().unwrap_or("").to_string();

    let mut flags = Vec::new();
    for (key, value) in &table {
        if key == "command" || (value.is_table() && SUBCOMMANDS.contains(&key.as_str())) {
            continue;
        }
        push_value(&mut flags, key, value)?;
    }
    if let Some(section) = table.get(&command).and_then(|v| v.as_table()) {
        for (key, value) in section {
            push_value(&mut flags, key, value)?;
        }
    }
    let tail = args.split_off(at + 1);
    args.extend(flags);
    args.extend(tail);
    Ok(args)
}
