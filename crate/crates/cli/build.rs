//! Embeds a `git describe`-style version string.

use std::process::Command;

fn git(args: &[&str]) -> Option<String> {
    let out = Command::new("git").args(args).output().ok()?;
    if !out.status.success() {
        return None;
    }
    let s = String::from_utf8(out.stdout).ok()?.trim().to_string();
    (!s.is_empty()).then_some(s)
}

fn main() {
    let pkg = env!("CARGO_PKG_VERSION");
    let version = match git(&["describe", "--tags", "--dirty"]) {
        Some(tagged) => tagged,
        None => match git(&["describe", "--always", "--dirty", "--abbrev=7"]) {
            Some(hash) => format!("v{pkg}-g{hash}"),
            None => format!("v{pkg}"),
        },
    };
    println!("cargo:rustc-env=DPMM_CFL_VERSION={version}");
    if let Some(git_dir) = git(&["rev-parse", "--git-dir"]) {
        println!("cargo:rerun-if-changed={git_dir}/HEAD");
        println!("cargo:rerun-if-changed={git_dir}/index");
    }
}
