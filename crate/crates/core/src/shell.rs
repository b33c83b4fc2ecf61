//! Command templates executed through `sh -c`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use crate::error::{Error, Result};

/// Single-quote a value for POSIX sh.
pub(crate) fn quote(value: &str) -> String {
    if !value.is_empty() && value.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_./:=+,".contains(&b)) {
        return value.to_string();
    }
    format!("'{}'", value.replace('\'', r"'\''"))
}

/// Substitute `{key}` placeholders with shell-quoted values. Every key in
/// `required` must appear in the template.
pub(crate) fn render(template: &str, vars: &[(&str, &str)], required: &[&str]) -> Result<String> {
    for key in required {
        if !template.contains(&format!("{{{key}}}")) {
            return Err(Error::Config(format!("command template `{template}` lacks {{{key}}}")));
        }
    }
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), &quote(value));
    }
    Ok(out)
}

/// Run a rendered command, inheriting the environment.
pub(crate) fn run(command: &str) -> Result<Output> {
    Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .output()
        .map_err(|e| Error::io("sh", e))
}

/// Persist captured output as `<stem>.stdout` / `<stem>.stderr`.
pub(crate) fn save_logs(output: &Output, stem: &Path) -> Result<()> {
    for (ext, data) in [("stdout", &output.stdout), ("stderr", &output.stderr)] {
        let path = PathBuf::from(format!("{}.{ext}", stem.display()));
        fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub(crate) fn tail(bytes: &[u8]) -> String {
    let text = String::from_utf8_lossy(bytes);
    let text = text.trim();
    let start = text.char_indices().rev().nth(2000).map_or(0, |(i, _)| i);
    text[start..].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting() {
        assert_eq!(quote("a/b.y4m"), "a/b.y4m");
        assert_eq!(quote("has space"), "'has space'");
        assert_eq!(quote("it's"), r"'it'\''s'");
        assert_eq!(quote(""), "''");
    }

    #[test]
    fn render_checks_placeholders() {
        let s = render("cp {input} {output}", &[("input", "a b"), ("output", "c")], &["input", "output"]).unwrap();
        assert_eq!(s, "cp 'a b' c");
        assert!(render("cp {input}", &[], &["output"]).is_err());
    }

    #[test]
    fn runs_through_sh() {
        let out = run("echo hi; echo err >&2; exit 3").unwrap();
        assert_eq!(out.status.code(), Some(3));
        assert_eq!(String::from_utf8_lossy(&out.stdout), "hi\n");
        assert_eq!(tail(&out.stderr), "err");
    }
}
