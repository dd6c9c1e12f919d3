//! Per-command parameters. Each struct is parsed both from flags and from a
//! JSON config file; flags win, then the file, then environment defaults,
//! then built-in defaults.

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub const SEED_ENV: &str = "DEPTHCOND_SEED";
pub const THREADS_ENV: &str = "DEPTHCOND_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Labels {
    Linear,
    Zeros,
    Noise,
}

/// A fixed depth, or `L1`: the depth after which the condition-number bound
/// applies for the measured separation of the inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Depth {
    Fixed(usize),
    L1,
}

impl FromStr for Depth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("l1") {
            return Ok(Self::L1);
        }
        s.parse().map(Self::Fixed).map_err(|_| format!("expected a non-negative integer or 'L1', got '{s}'"))
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(l) => write!(f, "{l}"),
            Self::L1 => f.write_str("L1"),
        }
    }
}

impl Serialize for Depth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Fixed(l) => s.serialize_u64(*l as u64),
            Self::L1 => s.serialize_str("L1"),
        }
    }
}

impl<'de> Deserialize<'de> for Depth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Self::Fixed(n)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn env_value<T: FromStr>(name: &str) -> Result<Option<T>> {
    match std::env::var(name) {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map(Some).map_err(|_| anyhow::anyhow!("{name}='{v}' is not a valid value"))
        }
        _ => Ok(None),
    }
}

pub fn env_seed() -> Result<u64> {
    Ok(env_value(SEED_ENV)?.unwrap_or(0))
}

pub fn env_threads() -> Result<Option<usize>> {
    env_value(THREADS_ENV)
}

/// Implemented by [`params!`] structs.
pub trait Params: Sized + Serialize + for<'de> Deserialize<'de> {
    fn config_path(&self) -> Option<&Path>;
    fn merged(self, file: Self) -> Self;
    fn fill_defaults(&mut self) -> Result<()>;
    fn seed(&self) -> u64;
    fn format(&self) -> Format;
    fn out(&self) -> Option<&Path>;
    fn threads(&self) -> Option<usize>;
}

/// Declares a parameter struct. Every field is optional on the command line
/// and in the config file; `= default` supplies the value used when neither
/// sets it. The settings shared by all commands are appended. `out` and
/// `threads` change where and how fast results are produced, not what they
/// are, so they stay out of the echoed config and its hash.
macro_rules! params {
    (
        $(#[$meta:meta])*
        pub struct $name:ident {
            $( $(#[$fmeta:meta])* $field:ident : $ty:ty $(= $default:expr)? ),* $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(clap::Args, Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
        #[serde(deny_unknown_fields, rename_all = "kebab-case")]
        pub struct $name {
            $(
                $(#[$fmeta])*
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
            /// JSON file with values for any of these options; flags take precedence.
            #[arg(long, value_name = "FILE")]
            #[serde(skip)]
            pub config: Option<std::path::PathBuf>,
            /// Random seed [default: $DEPTHCOND_SEED, else 0].
            #[arg(long)]
            pub seed: Option<u64>,
            /// Output format [default: csv].
            #[arg(long, value_enum)]
            pub format: Option<$crate::params::Format>,
            /// Output file, written atomically; stdout when absent.
            #[arg(long, value_name = "FILE")]
            #[serde(skip_serializing)]
            pub out: Option<std::path::PathBuf>,
            /// Worker threads [default: $DEPTHCOND_THREADS, else all cores].
            #[arg(long)]
            #[serde(skip_serializing)]
            pub threads: Option<usize>,
        }

        impl $crate::params::Params for $name {
            fn config_path(&self) -> Option<&std::path::Path> {
                self.config.as_deref()
            }

            fn merged(self, file: Self) -> Self {
                Self {
                    $( $field: self.$field.or(file.$field), )*
                    config: self.config,
                    seed: self.seed.or(file.seed),
                    format: self.format.or(file.format),
                    out: self.out.or(file.out),
                    threads: self.threads.or(file.threads),
                }
            }

            fn fill_defaults(&mut self) -> anyhow::Result<()> {
                $( $( if self.$field.is_none() { self.$field = Some($default); } )? )*
                if self.seed.is_none() {
                    self.seed = Some($crate::params::env_seed()?);
                }
                if self.threads.is_none() {
                    self.threads = $crate::params::env_threads()?;
                }
                self.format.get_or_insert($crate::params::Format::Csv);
                Ok(())
            }

            fn seed(&self) -> u64 {
                self.seed.expect("defaults filled")
            }

            fn format(&self) -> $crate::params::Format {
                self.format.expect("defaults filled")
            }

            fn out(&self) -> Option<&std::path::Path> {
                self.out.as_deref()
            }

            fn threads(&self) -> Option<usize> {
                self.threads
            }
        }
    };
}
pub(crate) use params;

/// Reads `path` as JSON into `P`, with unknown keys rejected and errors
/// reported by line and column.
pub fn load_config<P: Params>(path: &Path) -> Result<P> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        anyhow::anyhow!("config {} line {} column {}: {}", path.display(), e.line(), e.column(), strip_position(&e))
    })
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

/// Flags, then config file, then defaults.
pub fn resolve<P: Params>(flags: P) -> Result<P> {
    let mut p = match flags.config_path().map(Path::to_path_buf) {
        Some(path) => flags.merged(load_config(&path)?),
        None => flags,
    };
    p.fill_defaults()?;
    Ok(p)
}

/// Unwraps a field that has a default.
pub fn get<T: Clone>(v: &Option<T>) -> T {
    v.clone().expect("field has a default")
}

pub fn nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        bail!("--{name} needs at least one value");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_parsing() {
        assert_eq!("12".parse::<Depth>().unwrap(), Depth::Fixed(12));
        assert_eq!("l1".parse::<Depth>().unwrap(), Depth::L1);
        assert!("deep".parse::<Depth>().is_err());
        let d: Depth = serde_json::from_str("\"L1\"").unwrap();
        assert_eq!(d, Depth::L1);
        assert_eq!(serde_json::to_string(&Depth::Fixed(3)).unwrap(), "3");
    }
}
