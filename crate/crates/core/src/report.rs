//! Report envelope and the JSON writer used for every emitted report.
//!
//! Floats are written with 17 significant digits (`1.2345678901234567e-3`),
//! which round-trips every `f64`; non-finite values become `null`.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

pub const SCHEMA_VERSION: u32 = 1;

/// Pretty printer with fixed-precision floats.
pub struct SigDigits<'a>(PrettyFormatter<'a>);

impl Default for SigDigits<'_> {
    fn default() -> Self {
        Self(PrettyFormatter::with_indent(b"  "))
    }
}

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.0.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl Formatter for SigDigits<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{:.16e}", f64::from(value))
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, SigDigits::default());
    value.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

/// Top-level report: every command emits one.
#[derive(Debug, Clone, Serialize)]
pub struct Report<C: Serialize, B: Serialize> {
    pub schema: u32,
    pub command: String,
    pub passed: bool,
    pub config: C,
    pub checks: Vec<Check>,
    pub result: B,
}

/// One named pass/fail line of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool) -> Self {
        Self { name: name.into(), passed, detail: None }
    }

    pub fn with_detail(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: Some(detail.into()) }
    }
}

impl<C: Serialize, B: Serialize> Report<C, B> {
    pub fn new(command: &str, config: C, checks: Vec<Check>, result: B) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self { schema: SCHEMA_VERSION, command: command.to_string(), passed, config, checks, result }
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }
}
