//! ISCAS BENCH reader and writer.
//!
//! The grammar is line oriented with `#` comments:
//!
//! ```text
//! INPUT(a)
//! OUTPUT(y)
//! n1 = NAND(a, b)
//! k0 = TIE1            # role: tie-cell
//! ```
//!
//! Two extensions keep locked netlists in a single file: zero-input `TIE0` /
//! `TIE1` gates, and an optional trailing `# role: <role>` annotation on gate
//! lines. A leading `# name: <id>` comment names the netlist. Other tools
//! see both annotations as plain comments.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::netlist::{Gate, GateKind, NetId, Netlist, NetlistError, Role};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown gate kind `{kind}` at {line}:{column}")]
    UnknownKind {
        line: usize,
        column: usize,
        kind: String,
    },
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn column(&self) -> usize {
        self.text[..self.pos].chars().count() + 1
    }

    fn error(&self, message: &str) -> BenchError {
        BenchError::Syntax {
            line: self.line,
            column: self.column(),
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.text.len()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.text[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char, message: &str) -> Result<(), BenchError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(message))
        }
    }

    fn ident(&mut self) -> Result<&'a str, BenchError> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let len = rest
            .find(|c: char| c.is_whitespace() || "()=,#".contains(c))
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.error("expected an identifier"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }
}

/// Parses BENCH text into a validated netlist.
pub fn parse_bench(text: &str) -> Result<Netlist, BenchError> {
    let mut name = String::new();
    let mut inputs: Vec<NetId> = Vec::new();
    let mut outputs: Vec<NetId> = Vec::new();
    let mut gates: Vec<Gate> = Vec::new();
    let mut statements = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let (code, comment) = match raw.find('#') {
            Some(p) => (&raw[..p], Some(raw[p + 1..].trim())),
            None => (raw, None),
        };
        if code.trim().is_empty() {
            if let Some(rest) = comment.and_then(|c| c.strip_prefix("name:")) {
                if statements == 0 {
                    name = rest.trim().to_string();
                }
            }
            continue;
        }
        statements += 1;
        let mut cur = Cursor {
            text: code,
            pos: 0,
            line,
        };
        let first = cur.ident()?;
        if cur.eat('(') {
            let is_input = first.eq_ignore_ascii_case("INPUT");
            if !is_input && !first.eq_ignore_ascii_case("OUTPUT") {
                return Err(BenchError::Syntax {
                    line,
                    column: 1,
                    message: alloc::format!("expected INPUT or OUTPUT, found `{first}`"),
                });
            }
            let net = cur.ident()?.to_string();
            cur.expect(')', "expected `)`")?;
            if !cur.at_end() {
                return Err(cur.error("unexpected trailing text"));
            }
            if is_input {
                inputs.push(net);
            } else {
                outputs.push(net);
            }
            continue;
        }
        cur.expect('=', "expected `=` or `(`")?;
        cur.skip_ws();
        let kind_column = cur.column();
        let kind_name = cur.ident()?;
        let kind = GateKind::from_name(kind_name).ok_or_else(|| BenchError::UnknownKind {
            line,
            column: kind_column,
            kind: kind_name.to_string(),
        })?;
        let mut args = Vec::new();
        if cur.eat('(') {
            if !cur.eat(')') {
                loop {
                    args.push(cur.ident()?.to_string());
                    if cur.eat(')') {
                        break;
                    }
                    cur.expect(',', "expected `,` or `)`")?;
                }
            }
        } else if !kind.is_constant() {
            return Err(cur.error("expected `(`"));
        }
        if !cur.at_end() {
            return Err(cur.error("unexpected trailing text"));
        }
        let role = match comment.and_then(|c| c.strip_prefix("role:")) {
            Some(r) => Role::from_name(r.trim()).ok_or_else(|| BenchError::Syntax {
                line,
                column: raw.find('#').unwrap_or(0) + 1,
                message: alloc::format!("unknown role `{}`", r.trim()),
            })?,
            None => Role::Regular,
        };
        gates.push(Gate::new(first, kind, args).with_role(role));
    }

    if statements == 0 {
        return Err(BenchError::Syntax {
            line: 1,
            column: 1,
            message: "empty netlist".to_string(),
        });
    }
    Ok(Netlist::new(name, inputs, outputs, gates)?)
}

/// Serializes a netlist; `parse_bench` of the result reproduces it exactly.
pub fn write_bench(netlist: &Netlist) -> String {
    let mut out = String::new();
    if !netlist.name().is_empty() {
        let _ = writeln!(out, "# name: {}", netlist.name());
    }
    for net in netlist.inputs() {
        let _ = writeln!(out, "INPUT({net})");
    }
    for net in netlist.outputs() {
        let _ = writeln!(out, "OUTPUT({net})");
    }
    for gate in netlist.gates() {
        let _ = write!(out, "{} = {}", gate.output, gate.kind);
        if !gate.kind.is_constant() {
            let _ = write!(out, "({})", gate.inputs.join(", "));
        }
        if gate.role != Role::Regular {
            let _ = write!(out, "  # role: {}", gate.role.name());
        }
        out.push('\n');
    }
    out
}
