//! Oracles served by a child process over line-delimited standard streams.
//!
//! A request is one line of whitespace-separated tokens (rational strings or action
//! indices). The reply is one line of rational strings; `|` separates groups.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use mintyvi::error::{MintyError, Result};
use mintyvi::scalar::{fmt_rational, parse_rational};
use rug::Rational;

struct Pipes {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ChildOracle {
    command: Vec<String>,
    pipes: Mutex<Pipes>,
}

impl ChildOracle {
    pub fn spawn(command: &[String]) -> Result<Arc<Self>> {
        let (prog, args) = command.split_first().ok_or_else(|| MintyError::Parse("empty oracle command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| MintyError::Io(format!("cannot start oracle `{prog}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Arc::new(ChildOracle { command: command.to_vec(), pipes: Mutex::new(Pipes { child, stdin, stdout }) }))
    }

    /// Sends one request line and parses the `|`-separated reply groups.
    pub fn ask(&self, request: &str) -> Result<Vec<Vec<Rational>>> {
        let mut p = self.pipes.lock().map_err(|_| MintyError::OracleFailure("oracle lock poisoned".into()))?;
        let fail = |e: std::io::Error| MintyError::OracleFailure(format!("oracle `{}`: {e}", self.command.join(" ")));
        writeln!(p.stdin, "{request}").map_err(fail)?;
        p.stdin.flush().map_err(fail)?;
        let mut line = String::new();
        if p.stdout.read_line(&mut line).map_err(fail)? == 0 {
            return Err(MintyError::OracleFailure(format!("oracle `{}` closed its output", self.command.join(" "))));
        }
        line.split('|')
            .map(|g| g.split_whitespace().map(|t| parse_rational(t).map_err(Into::into)).collect())
            .collect()
    }

    pub fn ask_point(&self, x: &[Rational]) -> Result<Vec<Vec<Rational>>> {
        self.ask(&point_line(x))
    }
}

impl Drop for ChildOracle {
    fn drop(&mut self) {
        if let Ok(p) = self.pipes.get_mut() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}

pub fn point_line(x: &[Rational]) -> String {
    x.iter().map(fmt_rational).collect::<Vec<_>>().join(" ")
}

/// Exactly one reply group of the expected length.
pub fn single(groups: Vec<Vec<Rational>>, len: usize) -> Result<Vec<Rational>> {
    match <[Vec<Rational>; 1]>::try_from(groups) {
        Ok([g]) if g.len() == len => Ok(g),
        _ => Err(MintyError::OracleFailure(format!("oracle reply is not a single vector of length {len}"))),
    }
}
