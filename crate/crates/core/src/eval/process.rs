// SPDX-License-Identifier: Apache-2.0

//! Subprocess execution with a wall-clock budget and captured output.

use std::ffi::OsStr;
use std::fs::File;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

#[derive(Debug)]
pub struct ToolRun {
    pub status: Option<ExitStatus>,
    pub timed_out: bool,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
    pub stdout_path: PathBuf,
    pub stderr_path: PathBuf,
}

impl ToolRun {
    pub fn success(&self) -> bool {
        !self.timed_out && self.status.map(|s| s.success()).unwrap_or(false)
    }

    /// stdout followed by stderr.
    pub fn combined(&self) -> String {
        let mut s = self.stdout.clone();
        if !self.stderr.is_empty() {
            if !s.is_empty() && !s.ends_with('\n') {
                s.push('\n');
            }
            s.push_str(&self.stderr);
        }
        s
    }
}

/// Runs `program` in `cwd`, writing stdout/stderr to `<log_stem>.stdout` and
/// `<log_stem>.stderr` inside `cwd`. The whole process group is killed when
/// the budget runs out.
pub fn run_tool<I, S>(
    program: &Path,
    args: I,
    cwd: &Path,
    log_stem: &str,
    timeout: Duration,
) -> std::io::Result<ToolRun>
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    let stdout_path = cwd.join(format!("{log_stem}.stdout"));
    let stderr_path = cwd.join(format!("{log_stem}.stderr"));
    let start = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(File::create(&stdout_path)?)
        .stderr(File::create(&stderr_path)?)
        .process_group(0)
        .spawn()?;

    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if start.elapsed() >= timeout {
            timed_out = true;
            // SAFETY: killpg on the group we created for this child.
            unsafe {
                libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
            }
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(Duration::from_millis(5));
    };

    let read = |p: &Path| {
        std::fs::read(p)
            .map(|b| String::from_utf8_lossy(&b).into_owned())
            .unwrap_or_default()
    };
    Ok(ToolRun {
        status,
        timed_out,
        stdout: read(&stdout_path),
        stderr: read(&stderr_path),
        elapsed: start.elapsed(),
        stdout_path,
        stderr_path,
    })
}

/// Resolves a tool name against `PATH`; explicit paths are checked directly.
pub fn resolve(name: &str) -> Option<PathBuf> {
    let p = Path::new(name);
    if p.components().count() > 1 {
        return is_executable(p).then(|| p.to_path_buf());
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|cand| is_executable(cand))
}

/// First resolvable name from a candidate list.
pub fn resolve_any(names: &[String]) -> Option<PathBuf> {
    names.iter().find_map(|n| resolve(n))
}

fn is_executable(p: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    p.metadata()
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

/// Keeps the last `max_lines` non-empty lines that look like diagnostics,
/// falling back to the tail of the text.
pub fn excerpt(text: &str, max_lines: usize) -> String {
    let interesting: Vec<&str> = text
        .lines()
        .filter(|l| {
            let lower = l.to_ascii_lowercase();
            lower.contains("error") || lower.contains("warning") || lower.contains("mismatch")
        })
        .collect();
    let lines: Vec<&str> = if interesting.is_empty() {
        text.lines().filter(|l| !l.trim().is_empty()).collect()
    } else {
        interesting
    };
    let start = lines.len().saturating_sub(max_lines);
    lines[start..].join("\n")
}
