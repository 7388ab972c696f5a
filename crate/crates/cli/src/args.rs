use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qpke_core::states::Scheme;

pub const PROFILE_ENV: &str = "QPKE_PROFILE";

#[derive(Debug, Parser)]
#[command(name = "qpke", version, about = "Quantum public-key encryption simulator and verification suite")]
pub struct Cli {
    /// Size profile; QPKE_PROFILE, when set, takes precedence.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Directory for report.json, report.csv and transcript.json.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact distance and norm checks.
    Verify(VerifyArgs),
    /// Bob / register / Alice / Eve session.
    Protocol(ProtocolArgs),
    /// Pairwise distances of the l-bit label ensembles.
    Scan(ScanArgs),
    /// Monte-Carlo attacks on fresh ciphertexts.
    Attack(AttackArgs),
    /// Write a private key.
    Keygen(KeygenArgs),
    /// Publish a public key from a private key file.
    Publish(PublishArgs),
    /// Encrypt a plaintext under a public key file.
    Encrypt(EncryptArgs),
    /// Decrypt a ciphertext file.
    Decrypt(DecryptArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyTarget {
    Lemma4,
    /// Trace norm of A_odd.
    AOdd,
    Appendix,
    Multicopy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackTarget {
    Measurement,
    Helstrom,
    /// Random projective measurements against the optimum.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeFlag {
    #[value(name = "1bit")]
    OneBit,
    #[value(name = "2bit")]
    TwoBit,
    #[value(name = "lbit")]
    LBit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Ci,
    Nightly,
}

impl Profile {
    pub fn max_n(self) -> usize {
        match self {
            Profile::Ci => 5,
            Profile::Nightly => 8,
        }
    }

    pub fn max_trials(self) -> u64 {
        match self {
            Profile::Ci => 10_000,
            Profile::Nightly => 100_000,
        }
    }

    /// Resolves the profile: environment, then flag, then nightly.
    pub fn resolve(flag: Option<Profile>, env: Option<&str>) -> Result<Profile, String> {
        if let Some(raw) = env.filter(|v| !v.is_empty()) {
            return Profile::from_str(raw, true).map_err(|_| format!("{PROFILE_ENV}={raw} is not ci or nightly"));
        }
        Ok(flag.unwrap_or(Profile::Nightly))
    }
}

/// Inclusive `a..b` (or `a..=b`), comma lists, or a single value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Values(pub Vec<usize>);

impl FromStr for Values {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("'{x}' is not a non-negative integer"));
        let mut out = Vec::new();
        for part in s.split(',') {
            if let Some((a, b)) = part.split_once("..") {
                let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
                if a > b {
                    return Err(format!("empty range {part}"));
                }
                out.extend(a..=b);
            } else {
                out.push(parse(part)?);
            }
        }
        if out.is_empty() {
            return Err("no values".into());
        }
        Ok(Values(out))
    }
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    #[arg(long, value_enum, default_value = "1bit")]
    pub scheme: SchemeFlag,
    /// Plaintext bits for the lbit scheme.
    #[arg(long)]
    pub l: Option<usize>,
}

impl SchemeArgs {
    pub fn scheme(&self) -> Result<Scheme, String> {
        let name = match self.scheme {
            SchemeFlag::OneBit => "1bit",
            SchemeFlag::TwoBit => "2bit",
            SchemeFlag::LBit => "lbit",
        };
        Scheme::from_flag(name, self.l).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub target: VerifyTarget,
    #[arg(long)]
    pub n: Values,
    /// Copy counts for the multicopy target.
    #[arg(long, default_value = "1")]
    pub t: Values,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, visible_alias = "trials", default_value_t = 100)]
    pub messages: u64,
    #[arg(long)]
    pub eve: Option<String>,
    /// Reuse this tag (hex) for every public key.
    #[arg(long)]
    pub fixed_key: Option<String>,
    /// Reuse budget in fixed-key mode.
    #[arg(long)]
    pub t_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub n: Values,
    #[arg(long)]
    pub l: Values,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long, value_enum, default_value = "measurement")]
    pub target: AttackTarget,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub trials: Option<u64>,
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub scheme: SchemeArgs,
}

#[derive(Debug, Args)]
pub struct PublishArgs {
    #[arg(long)]
    pub key: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncryptArgs {
    #[arg(long)]
    pub public: PathBuf,
    /// Plaintext bits, most significant first (e.g. 10).
    #[arg(long)]
    pub message: String,
}

#[derive(Debug, Args)]
pub struct DecryptArgs {
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub ciphertext: PathBuf,
}
