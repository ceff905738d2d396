//! Artifact writing: JSON with floats fixed to 17 significant digits,
//! atomic file replacement, and the run manifest written last.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::ser::Serialize;
use serde::Deserialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use crate::dual_solver::SolveConfig;
use crate::error::Result;

/// Pretty JSON formatter printing every float as `d.dddddddddddddddde±x`.
struct FixedDigits<'a>(PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate! {
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

/// Serializes with two-space indentation and 17 significant digits.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, FixedDigits(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Collects artifacts for one command run.
#[derive(Debug)]
pub struct ArtifactSink {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactSink {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, contents)?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = to_json(value)?;
        self.write(name, text.as_bytes())
    }
}

/// Completion record, written after every other artifact.
#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub body_spec_path: Option<String>,
    pub config: SolveConfig,
    pub output_dir: String,
    pub artifacts: Vec<String>,
    pub wall_time_s: f64,
    pub version: String,
    pub seed: u64,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        write_atomic(&path, to_json(self)?.as_bytes())?;
        Ok(path)
    }
}
