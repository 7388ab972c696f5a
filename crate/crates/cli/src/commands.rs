use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context as _, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use qpke_core::analysis;
use qpke_core::bitmath::BitString;
use qpke_core::linalg;
use qpke_core::protocol::{self, SessionConfig};
use qpke_core::qpke::{self, Ciphertext, PrivateKey, PublicKey};
use qpke_core::report::{Report, ReportRow};
use qpke_core::states::{self, Plaintext};
use qpke_core::stats::binomial_sigma;
use qpke_core::{Budget, Error};

use crate::args::{
    AttackArgs, AttackTarget, Cli, Command, DecryptArgs, EncryptArgs, KeygenArgs, Profile, ProtocolArgs, PublishArgs,
    ScanArgs, VerifyArgs, VerifyTarget,
};

/// A bad flag or parameter; exit status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.is::<Usage>() || e.is::<std::io::Error>() || e.is::<serde_json::Error>() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(
            Error::DecryptionIntegrity(_)
            | Error::NoConvergence { .. }
            | Error::NotWalshDiagonal { .. }
            | Error::BudgetExceeded { .. },
        ) => 1,
        Some(_) => 2,
        None => 1,
    }
}

struct Run<'a> {
    profile: Profile,
    seed: u64,
    out: Option<&'a Path>,
    budget: Budget,
}

impl Run<'_> {
    fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.profile.max_n() {
            return Err(usage(format!("n = {n} is outside 1..={} for the {:?} profile", self.profile.max_n(), self.profile)));
        }
        Ok(())
    }

    fn check_trials(&self, trials: u64) -> Result<()> {
        if trials == 0 || trials > self.profile.max_trials() {
            return Err(usage(format!(
                "trials = {trials} is outside 1..={} for the {:?} profile",
                self.profile.max_trials(),
                self.profile
            )));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn finish(&self, report: &Report) -> Result<bool> {
        print_rows(report);
        if let Some(dir) = self.out {
            report.write_dir(dir).with_context(|| format!("writing reports to {}", dir.display()))?;
        }
        Ok(report.passed)
    }

    fn write_json(&self, name: &str, body: &str) -> Result<()> {
        match self.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(name), body)?;
                println!("wrote {}", dir.join(name).display());
            }
            None => println!("{body}"),
        }
        Ok(())
    }
}

fn print_rows(report: &Report) {
    println!("{:>3} {:<8} {:<16} {:>14} {:>16} {:>10} {:>10}  status", "n", "scheme", "pair", "computed", "expected", "error", "ms");
    for r in &report.rows {
        let error = r.error.map_or_else(|| "-".to_string(), |e| format!("{e:.2e}"));
        println!(
            "{:>3} {:<8} {:<16} {:>14.10} {:>16} {:>10} {:>10.1}  {}",
            r.n,
            r.scheme,
            r.pair,
            r.computed,
            r.expected,
            error,
            r.runtime_ms,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    println!("{} (seed {})", if report.passed { "all checks passed" } else { "CHECKS FAILED" }, report.seed.unwrap_or_default());
}

pub fn run(cli: &Cli, profile: Profile) -> Result<bool> {
    let ctx = Run { profile, seed: cli.seed, out: cli.out.as_deref(), budget: Budget::default() };
    match &cli.command {
        Command::Verify(a) => verify(&ctx, a),
        Command::Protocol(a) => protocol_cmd(&ctx, a),
        Command::Scan(a) => scan(&ctx, a),
        Command::Attack(a) => attack(&ctx, a),
        Command::Keygen(a) => keygen(&ctx, a),
        Command::Publish(a) => publish(&ctx, a),
        Command::Encrypt(a) => encrypt(&ctx, a),
        Command::Decrypt(a) => decrypt(a),
    }
}

fn verify(ctx: &Run, a: &VerifyArgs) -> Result<bool> {
    for &n in &a.n.0 {
        ctx.check_n(n)?;
    }
    let config = json!({ "target": a.target, "n": a.n, "t": a.t, "profile": ctx.profile, "seed": ctx.seed });
    let mut report = Report::new("verify", config, Some(ctx.seed));
    for &n in &a.n.0 {
        match a.target {
            VerifyTarget::Lemma4 => {
                let r = analysis::verify_lemma4(n, &ctx.budget)?;
                report.push(ReportRow::from_distance(&r));
                report.detail(&r)?;
            }
            VerifyTarget::AOdd => {
                let start = Instant::now();
                let norm = linalg::trace_norm(&states::a_odd(n, &ctx.budget)?)?;
                let expected = (1u64 << n) as f64;
                let error = (norm - expected).abs();
                report.push(ReportRow {
                    n,
                    scheme: "1bit".into(),
                    pair: "A_odd".into(),
                    computed: norm,
                    expected: format!("{expected}"),
                    error: Some(error),
                    runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                    passed: error <= analysis::EXACT_TOLERANCE,
                });
            }
            VerifyTarget::Appendix => {
                let rows = analysis::verify_appendix_all(n, &ctx.budget)?;
                report.extend(rows.iter().map(ReportRow::from_distance));
                report.detail(&rows)?;
            }
            VerifyTarget::Multicopy => {
                for &t in &a.t.0 {
                    let r = analysis::multicopy_norm(n, t, &ctx.budget)?;
                    report.extend(ReportRow::from_multicopy(&r));
                    report.detail(&r)?;
                }
            }
        }
    }
    ctx.finish(&report)
}

fn protocol_cmd(ctx: &Run, a: &ProtocolArgs) -> Result<bool> {
    ctx.check_n(a.n)?;
    ctx.check_trials(a.messages)?;
    let scheme = a.scheme.scheme().map_err(usage)?;
    if let Some(name) = &a.eve {
        if !protocol::eve_strategies().contains(&name.as_str()) {
            return Err(usage(format!("unknown eve strategy '{name}'; known: {}", protocol::eve_strategies().join(", "))));
        }
    }
    let messages = protocol::random_messages(scheme, a.messages as usize, ctx.seed);
    let mut config = SessionConfig::new(a.n, scheme, messages, ctx.seed);
    config.eve = a.eve.clone();
    config.t_max = a.t_max;
    if let Some(hex) = &a.fixed_key {
        config.fixed_key = Some(BitString::from_hex(hex, a.n)?);
    }
    let start = Instant::now();
    let session = protocol::run_session(&config, &ctx.budget)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let stats = &session.stats;

    let run_config = json!({
        "n": a.n, "scheme": scheme, "messages": a.messages, "eve": a.eve,
        "fixed-key": a.fixed_key, "t-max": a.t_max, "profile": ctx.profile, "seed": ctx.seed,
    });
    let mut report = Report::new("protocol", run_config, Some(ctx.seed));
    let passive = matches!(a.eve.as_deref(), None | Some("none"));
    report.push(ReportRow {
        n: a.n,
        scheme: scheme.to_string(),
        pair: "success_rate".into(),
        computed: stats.success_rate,
        expected: if passive { "1".into() } else { "report".into() },
        error: passive.then(|| (1.0 - stats.success_rate).abs()),
        runtime_ms,
        passed: !passive || stats.success_rate == 1.0,
    });
    if let Some(acc) = stats.eve_accuracy {
        let bound = stats.eve_bound;
        let sigma = binomial_sigma(bound.unwrap_or(0.5).min(1.0), a.messages);
        report.push(ReportRow {
            n: a.n,
            scheme: scheme.to_string(),
            pair: "eve_accuracy".into(),
            computed: acc,
            expected: bound.map_or_else(|| "report".into(), |b| format!("<={b}")),
            error: None,
            runtime_ms,
            passed: bound.is_none_or(|b| acc <= b + 4.0 * sigma),
        });
    }
    report.detail(stats)?;
    println!("{}", serde_json::to_string(stats)?);
    if let Some(dir) = ctx.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("transcript.json"), session.transcript.to_json())?;
    }
    ctx.finish(&report)
}

fn scan(ctx: &Run, a: &ScanArgs) -> Result<bool> {
    let config = json!({ "n": a.n, "l": a.l, "profile": ctx.profile, "seed": ctx.seed });
    let mut report = Report::new("scan", config, Some(ctx.seed));
    for &n in &a.n.0 {
        ctx.check_n(n)?;
        for &l in &a.l.0 {
            if l == 0 || n % l != 0 {
                return Err(usage(format!("n = {n} is not a multiple of l = {l}")));
            }
            let r = analysis::conjecture_scan(n, l, &ctx.budget)?;
            report.extend(r.rows.iter().map(ReportRow::from_distance));
            let scheme = format!("lbit({l})");
            for (pair, computed) in [("max", r.max_distance), ("ratio", r.ratio)] {
                report.push(ReportRow {
                    n,
                    scheme: scheme.clone(),
                    pair: pair.into(),
                    computed,
                    expected: "report".into(),
                    error: None,
                    runtime_ms: r.runtime_ms,
                    passed: true,
                });
            }
            report.detail(&r)?;
        }
    }
    ctx.finish(&report)
}

fn attack(ctx: &Run, a: &AttackArgs) -> Result<bool> {
    ctx.check_n(a.n)?;
    let trials = a.trials.unwrap_or(ctx.profile.max_trials());
    ctx.check_trials(trials)?;
    let config = json!({ "target": a.target, "n": a.n, "trials": trials, "profile": ctx.profile, "seed": ctx.seed });
    let mut report = Report::new("attack", config, Some(ctx.seed));
    let mut rng = ctx.rng();
    let start = Instant::now();
    match a.target {
        AttackTarget::Measurement => {
            let r = analysis::measurement_attack(a.n, trials, &mut rng)?;
            report.push(ReportRow::from_attack("measurement", &r, start.elapsed().as_secs_f64() * 1e3));
            report.detail(&r)?;
        }
        AttackTarget::Helstrom => {
            if a.n > analysis::LEMMA4_BRUTE_MAX {
                return Err(usage(format!("helstrom attack needs n <= {}", analysis::LEMMA4_BRUTE_MAX)));
            }
            let r = analysis::helstrom_experiment(a.n, trials, &mut rng, &ctx.budget)?;
            report.push(ReportRow::from_attack("helstrom", &r, start.elapsed().as_secs_f64() * 1e3));
            report.detail(&r)?;
        }
        AttackTarget::Random => {
            let r = analysis::random_measurements(a.n, 20, &mut rng, &ctx.budget)?;
            report.push(ReportRow {
                n: a.n,
                scheme: "1bit".into(),
                pair: "random-max".into(),
                computed: r.successes.iter().copied().fold(0.0, f64::max),
                expected: format!("<={}", r.optimal),
                error: None,
                runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                passed: r.passed(),
            });
            report.detail(&r)?;
        }
    }
    ctx.finish(&report)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&body).with_context(|| format!("parsing {}", path.display()))?)
}

fn keygen(ctx: &Run, a: &KeygenArgs) -> Result<bool> {
    ctx.check_n(a.n)?;
    let scheme = a.scheme.scheme().map_err(usage)?;
    let key = qpke::keygen(a.n, scheme, qpke::seed_from_u64(ctx.seed))?;
    ctx.write_json("private-key.json", &serde_json::to_string_pretty(&key)?)?;
    Ok(true)
}

fn publish(ctx: &Run, a: &PublishArgs) -> Result<bool> {
    let key: PrivateKey = read_json(&a.key)?;
    let pk = key.publish(&mut ctx.rng())?;
    ctx.write_json("public-key.json", &serde_json::to_string_pretty(&pk)?)?;
    Ok(true)
}

fn encrypt(ctx: &Run, a: &EncryptArgs) -> Result<bool> {
    let pk: PublicKey = read_json(&a.public)?;
    let message: Plaintext = a.message.parse().map_err(|e: Error| usage(e.to_string()))?;
    let ct = qpke::encrypt(&pk, &message)?;
    ctx.write_json("ciphertext.json", &serde_json::to_string_pretty(&ct)?)?;
    Ok(true)
}

fn decrypt(a: &DecryptArgs) -> Result<bool> {
    let key: PrivateKey = read_json(&a.key)?;
    let ct: Ciphertext = read_json(&a.ciphertext)?;
    println!("{}", qpke::decrypt(&key, &ct)?);
    Ok(true)
}
