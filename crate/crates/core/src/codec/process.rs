use std::io::Read;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// Exit status `sh` uses for "command not found".
const SHELL_NOT_FOUND: i32 = 127;

pub(crate) struct Captured {
    pub stdout: String,
    pub stderr: String,
}

impl Captured {
    pub fn combined(&self) -> String {
        format!("{}{}", self.stdout, self.stderr)
    }
}

fn drain(mut pipe: impl Read + Send + 'static) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn kill(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}

/// Runs `cmd` to completion, killing it after `timeout`. A missing executable
/// (spawn `NotFound`, or shell status 127) is reported as adapter-unavailable.
pub(crate) fn run(mut cmd: Command, timeout: Duration) -> Result<Captured> {
    let label = format!("{cmd:?}");
    let mut child = cmd
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                Error::AdapterUnavailable(format!("{label}: {e}"))
            }
            _ => Error::Adapter { message: format!("failed to start {label}: {e}"), output: String::new() },
        })?;
    let out = drain(child.stdout.take().expect("stdout piped"));
    let err = drain(child.stderr.take().expect("stderr piped"));

    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if start.elapsed() >= timeout => {
                kill(&mut child);
                // grandchildren may still hold the pipes open; leave the readers detached
                drop((out, err));
                return Err(Error::Adapter {
                    message: format!("{label} timed out after {timeout:?}"),
                    output: String::new(),
                });
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                kill(&mut child);
                return Err(Error::Adapter { message: format!("waiting on {label}: {e}"), output: String::new() });
            }
        }
    };
    let captured = Captured { stdout: out.join().unwrap_or_default(), stderr: err.join().unwrap_or_default() };
    if status.code() == Some(SHELL_NOT_FOUND) {
        return Err(Error::AdapterUnavailable(format!("{label}: {}", captured.stderr.trim())));
    }
    if !status.success() {
        return Err(Error::Adapter { message: format!("{label} exited with {status}"), output: captured.combined() });
    }
    Ok(captured)
}

/// Single-quotes `s` for `sh`.
pub(crate) fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// `sh -c` command with `{name}` placeholders replaced by quoted values.
pub(crate) fn shell_command(template: &str, vars: &[(&str, &str)]) -> Command {
    let mut line = template.to_string();
    for (name, value) in vars {
        line = line.replace(&format!("{{{name}}}"), &shell_quote(value));
    }
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(line);
    cmd
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting_survives_awkward_paths() {
        let cmd = shell_command("printf %s {x}", &[("x", "it's a $path")]);
        let out = run(cmd, Duration::from_secs(10)).unwrap();
        assert_eq!(out.stdout, "it's a $path");
    }

    #[test]
    fn failure_keeps_stderr() {
        let cmd = shell_command("echo boom >&2; exit 3", &[]);
        match run(cmd, Duration::from_secs(10)) {
            Err(Error::Adapter { output, .. }) => assert!(output.contains("boom")),
            other => panic!("unexpected {:?}", other.err()),
        }
    }

    #[test]
    fn missing_programs_are_unavailable() {
        let cmd = shell_command("definitely-not-a-real-encoder-xyz --help", &[]);
        assert!(matches!(run(cmd, Duration::from_secs(10)), Err(Error::AdapterUnavailable(_))));
        let direct = Command::new("/nonexistent/tool");
        assert!(matches!(run(direct, Duration::from_secs(10)), Err(Error::AdapterUnavailable(_))));
    }

    #[test]
    fn hung_commands_are_killed() {
        let start = Instant::now();
        let cmd = shell_command("sleep 30", &[]);
        let r = run(cmd, Duration::from_millis(200));
        assert!(matches!(r, Err(Error::Adapter { .. })));
        assert!(start.elapsed() < Duration::from_secs(10));
    }
}
