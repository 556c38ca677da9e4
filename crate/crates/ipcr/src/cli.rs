//! The `ipcr` command line.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use ipcr_core::client::ProtocolError;
use ipcr_core::config::canonical_field;
use ipcr_core::session::fetch_by_index;
use ipcr_core::{
    run_retrieval, ActionabilityWeights, Database, FeatureVector, ImmutableSet, Phase, ProtocolConfig,
    RetrievalOutcome, RetrievalRequest, Scheme, SessionError, SimCluster, Transport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::analysis::{leakage_report, report_csv, report_table};
use crate::dbfile::{format_database, load_database};
use crate::instances::{check_instance, random_instance};
use crate::manifest::{Endpoints, Parameters, RunManifest};
use crate::node_config::{read_key_file, ServerConfig};
use crate::tcp::{serve, TcpTransport};

#[derive(Parser, Debug)]
#[command(name = "ipcr", version, about = "Private counterfactual retrieval with immutable features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic database, a shared key and one config per server.
    Gen(GenArgs),
    /// Run one server from its config file.
    Serve(ServeArgs),
    /// Run a private retrieval against live servers or an in-process cluster.
    Query(QueryArgs),
    /// Exact database leakage for both schemes.
    Leakage(LeakageArgs),
    /// Compare protocol runs with the plaintext oracle on random instances.
    Selftest(SelftestArgs),
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Scheme::ALL.iter().map(|s| s.name()).collect();
        format!("unknown scheme {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_weight(s: &str) -> Result<(usize, u32), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected k=v, got {s:?}"))?;
    Ok((k.trim().parse().map_err(|_| format!("bad feature index {k:?}"))?, v.trim().parse().map_err(|_| format!("bad weight {v:?}"))?))
}

#[derive(Args, Debug, Clone)]
pub struct SchemeParams {
    #[arg(long, default_value = "two-phase", value_parser = parse_scheme)]
    pub scheme: Scheme,
    /// Cardinality bound F on the immutable set (single-phase); defaults to d.
    #[arg(long = "F", alias = "f")]
    pub f: Option<usize>,
    /// Immutable scaling factor L (single-phase); defaults to L1 R^2 d + 1.
    #[arg(long = "L", alias = "l")]
    pub l: Option<u64>,
    /// Maximum actionability weight.
    #[arg(long = "L1", alias = "l1", default_value_t = 1)]
    pub l1: u32,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub params: SchemeParams,
    #[arg(long)]
    pub d: usize,
    #[arg(long = "R", alias = "r")]
    pub r: u32,
    #[arg(long = "M", alias = "m")]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Keep this point out of the database, e.g. 1,2,0.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Option<Vec<u32>>,
    /// Server n listens on host:(port + n).
    #[arg(long, default_value = "127.0.0.1:7000")]
    pub listen_base: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured listen address.
    #[arg(long)]
    pub listen: Option<String>,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[command(flatten)]
    pub params: SchemeParams,
    /// The user's sample, e.g. 1,2,0.
    #[arg(long, value_delimiter = ',', required = true)]
    pub x: Vec<u32>,
    /// 1-based immutable feature indices, e.g. 1,3.
    #[arg(long, value_delimiter = ',')]
    pub immutable: Vec<usize>,
    /// Actionability weight for a mutable feature, k=v; repeatable.
    #[arg(long = "weight", value_parser = parse_weight)]
    pub weights: Vec<(usize, u32)>,
    /// Run against an in-process cluster serving this database.
    #[arg(long, conflicts_with = "endpoint")]
    pub sim: Option<PathBuf>,
    /// Server address host:port in server order; repeatable or comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub endpoint: Vec<String>,
    /// Shared key for --sim; a seeded key is derived when absent.
    #[arg(long)]
    pub key_file: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub always_run_phase2: bool,
    /// Fetch the counterfactual row in the clear afterwards (not private).
    #[arg(long)]
    pub fetch: bool,
    #[arg(long)]
    pub verbose: bool,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LeakageArgs {
    #[arg(long = "R", alias = "r", default_value_t = 3)]
    pub r: u32,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long = "M", alias = "m", default_value_t = 3)]
    pub m: usize,
    /// Logarithm base; defaults to the canonical single-phase field size.
    #[arg(long)]
    pub base: Option<f64>,
    /// Also write the rows as CSV here (plus a manifest next to it).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Random instances per scheme.
    #[arg(long, default_value_t = 250)]
    pub cases: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Usage, configuration, endpoint or parameter problems.
    Config(String),
    /// The candidate set is empty.
    NoCounterfactual,
    /// A server's answers failed the consistency checks.
    Misbehavior(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::NoCounterfactual => 3,
            CliError::Misbehavior(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Failed(m) => f.write_str(m),
            CliError::NoCounterfactual => f.write_str("there are no valid counterfactuals"),
            CliError::Misbehavior(m) => write!(f, "server misbehavior detected: {m}"),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ipcr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Query(a) => cmd_query(a),
        Command::Leakage(a) => cmd_leakage(a),
        Command::Selftest(a) => cmd_selftest(a),
    }
}

fn scheme_config(p: &SchemeParams, d: usize, m: usize, r: u32) -> Result<ProtocolConfig, CliError> {
    ProtocolConfig::with_bounds(p.scheme, d, m, r, p.f.unwrap_or(d), p.l, p.l1).map_err(config_err)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn cmd_gen(a: GenArgs) -> Result<(), CliError> {
    let cfg = scheme_config(&a.params, a.d, a.m, a.r)?;
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let exclude = a.exclude.map(|x| FeatureVector::new(x, a.r)).transpose().map_err(config_err)?;
    if let Some(x) = &exclude {
        x.check_shape(a.d, a.r).map_err(config_err)?;
        if (a.r as u64 + 1).checked_pow(a.d as u32) == Some(1) && a.m > 0 {
            return Err(CliError::Config("no point left to sample after excluding x".into()));
        }
    }
    let rows = (0..a.m)
        .map(|_| loop {
            let y = crate::instances::random_point(&mut rng, a.d, a.r);
            if exclude.as_ref() != Some(&y) {
                break y;
            }
        })
        .collect();
    let db = Database::new(a.d, a.r, rows).map_err(config_err)?;
    let mut key = [0u8; 32];
    rng.fill(&mut key);

    let (host, port) = a.listen_base.rsplit_once(':').ok_or_else(|| config_err("--listen-base must be host:port"))?;
    let port: u16 = port.parse().map_err(|_| config_err("--listen-base port is not a number"))?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Failed(format!("{}: {e}", a.out.display())))?;
    write_file(&a.out.join("database.txt"), &format_database(&db))?;
    write_file(&a.out.join("key.hex"), &format!("{}\n", hex::encode(key)))?;
    let mut outputs = vec!["database.txt".to_string(), "key.hex".to_string()];
    for (i, alpha) in cfg.alphas.iter().enumerate() {
        let n = i + 1;
        let server = ServerConfig {
            index: n,
            n_servers: cfg.n_servers(),
            q: cfg.q.get(),
            alpha: alpha.value(),
            key: None,
            key_file: Some("key.hex".into()),
            database: "database.txt".into(),
            listen: format!("{host}:{}", port as usize + n),
        };
        let name = format!("server-{n}.toml");
        write_file(&a.out.join(&name), &server.to_toml())?;
        outputs.push(name);
    }
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        command: "gen".into(),
        scheme: Some(cfg.scheme.to_string()),
        parameters: params_of(&cfg),
        seed: Some(a.seed),
        endpoints: None,
        outputs,
    };
    write_file(&a.out.join("manifest.json"), &manifest.to_json())?;
    println!(
        "wrote {} rows, key and {} server configs to {} (q = {}, L = {})",
        a.m,
        cfg.n_servers(),
        a.out.display(),
        cfg.q.get(),
        cfg.l
    );
    Ok(())
}

fn params_of(cfg: &ProtocolConfig) -> Parameters {
    let single = !cfg.scheme.is_two_phase();
    Parameters {
        d: cfg.d,
        r: cfg.r,
        m: cfg.m,
        f: single.then_some(cfg.f),
        l: single.then_some(cfg.l),
        l1: cfg.scheme.is_actionable().then_some(cfg.l1),
        q: Some(cfg.q.get()),
        alphas: cfg.alphas.iter().map(|a| a.value()).collect(),
        base: None,
    }
}

fn cmd_serve(a: ServeArgs) -> Result<(), CliError> {
    let (cfg, base) = ServerConfig::load(&a.config).map_err(config_err)?;
    let node = cfg.build_node(&base).map_err(config_err)?;
    let addr = a.listen.unwrap_or(cfg.listen);
    let listener = TcpListener::bind(&addr).map_err(|e| config_err(format!("{addr}: {e}")))?;
    let local = listener.local_addr().map_err(config_err)?;
    println!(
        "server {}/{} listening on {local} (q = {}, alpha = {}, M = {}, d = {})",
        cfg.index,
        cfg.n_servers,
        cfg.q,
        cfg.alpha,
        node.database().len(),
        node.database().dim()
    );
    std::io::stdout().flush().ok();
    serve(listener, Arc::new(Mutex::new(node))).map_err(|e| CliError::Failed(e.to_string()))
}

fn session_error(e: SessionError) -> CliError {
    if e.is_misbehavior() {
        CliError::Misbehavior(e.to_string())
    } else {
        match e {
            SessionError::Protocol(ProtocolError::Flow(_)) => CliError::Failed(e.to_string()),
            other => config_err(other),
        }
    }
}

fn cmd_query(a: QueryArgs) -> Result<(), CliError> {
    let seed = a.seed;
    let mut rng = match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_rng(&mut rand::rng()),
    };

    let (mut transport, endpoints, r): (Box<dyn Transport>, Endpoints, u32) = if let Some(path) = &a.sim {
        let db = load_database(path).map_err(config_err)?;
        // The simulated field must be large enough for the requested weights.
        let mut params = a.params.clone();
        params.l1 = a.weights.iter().map(|&(_, w)| w).fold(params.l1, u32::max);
        let cfg = scheme_config(&params, db.dim(), db.len(), db.range())?;
        let key = match &a.key_file {
            Some(p) => read_key_file(p).map_err(config_err)?,
            None => {
                let mut k = [0u8; 32];
                ChaCha20Rng::seed_from_u64(seed.unwrap_or(0) ^ 0x006b_6579).fill(&mut k);
                k
            }
        };
        let r = db.range();
        (Box::new(SimCluster::deploy(&cfg, &db, key).map_err(config_err)?), Endpoints::simulated(), r)
    } else if !a.endpoint.is_empty() {
        let t = TcpTransport::connect(&a.endpoint, Duration::from_secs(a.timeout_secs)).map_err(config_err)?;
        (Box::new(t), Endpoints::Live(a.endpoint.clone()), 0)
    } else {
        return Err(config_err("either --sim <database> or --endpoint <host:port> is required"));
    };

    let d = a.x.len();
    if d == 0 {
        return Err(config_err("--x must not be empty"));
    }
    let x_range = if r == 0 { a.x.iter().copied().max().unwrap_or(0) } else { r };
    let x = FeatureVector::new(a.x.clone(), x_range).map_err(config_err)?;
    let immutable = ImmutableSet::new(a.immutable.clone(), d).map_err(config_err)?;
    let weights = if a.weights.is_empty() && !a.params.scheme.is_actionable() {
        None
    } else {
        if !a.params.scheme.is_actionable() {
            return Err(config_err("--weight needs an actionable scheme"));
        }
        let explicit: BTreeMap<usize, u32> = a.weights.iter().copied().collect();
        let l1 = a.params.l1.max(explicit.values().copied().max().unwrap_or(1));
        Some(ActionabilityWeights::new(explicit, l1).map_err(config_err)?)
    };
    let mut req = RetrievalRequest::new(x, immutable, a.params.scheme);
    req.weights = weights;
    req.f = a.params.f;
    req.l = a.params.l;
    req.always_run_phase2 = a.always_run_phase2;

    let out = run_retrieval(transport.as_mut(), &req, &mut rng).map_err(session_error)?;
    print_outcome(&out, a.verbose);

    if let Some(path) = &a.manifest {
        let manifest = RunManifest {
            command: "query".into(),
            scheme: Some(out.config.scheme.to_string()),
            parameters: params_of(&out.config),
            seed,
            endpoints: Some(endpoints),
            outputs: vec![],
        };
        manifest.write(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    }

    let Some(star) = out.result.theta_star else {
        return Err(CliError::NoCounterfactual);
    };
    if a.fetch {
        let row = fetch_by_index(transport.as_mut(), 0, out.session, star, out.config.r).map_err(session_error)?;
        let coords: Vec<String> = row.coords().iter().map(u32::to_string).collect();
        println!("row {star}: {} (plaintext fetch, not private)", coords.join(" "));
    }
    Ok(())
}

fn print_outcome(out: &RetrievalOutcome, verbose: bool) {
    let cfg = &out.config;
    let res = &out.result;
    println!("scheme: {} (q = {}, N = {})", cfg.scheme, cfg.q.get(), cfg.n_servers());
    let members: Vec<String> = res.candidate_set.members().map(|i| i.to_string()).collect();
    println!("candidates: {{{}}}", members.join(", "));
    match res.theta_star {
        Some(i) => println!("counterfactual: row {i}"),
        None => println!("counterfactual: none"),
    }
    match res.distance {
        Some(v) => println!("distance: {v}"),
        None if res.theta_star.is_some() => println!("distance: not computed (distance round skipped)"),
        None => {}
    }
    let c = &res.cost;
    println!("cost: upload {}, download {}, total {} field elements", c.upload_total(), c.download_total(), c.total());
    for (phase, label) in [(Phase::Membership, "membership"), (Phase::Distance, "distance"), (Phase::Single, "single")] {
        let (up, down) = c.phase(phase);
        if up + down > 0 {
            println!("  {label}: upload {up}, download {down}");
        }
    }
    if verbose {
        let revealed: Vec<String> = out.revealed.iter().map(u64::to_string).collect();
        println!("revealed: [{}]", revealed.join(", "));
        if !res.mismatch_hints.is_empty() {
            let hints: Vec<String> =
                res.mismatch_hints.iter().map(|h| h.map_or("-".into(), |k| format!(">={k}"))).collect();
            println!("immutable mismatches: [{}]", hints.join(", "));
        }
    }
}

fn cmd_leakage(a: LeakageArgs) -> Result<(), CliError> {
    let base = match a.base {
        Some(b) => b,
        None => canonical_field(Scheme::SinglePhase, a.d, a.r, a.d, 1).map_err(config_err)?.get() as f64,
    };
    if base.is_nan() || base <= 1.0 {
        return Err(config_err("--base must exceed 1"));
    }
    let rows = leakage_report(a.r, a.d, a.m, base);
    if let Some(e) = rows.iter().find_map(|r| match &r.leakage {
        Err(ipcr_core::leakage::LeakageError::InvalidModel(m)) => Some(m),
        _ => None,
    }) {
        return Err(config_err(e));
    }
    print!("{}", report_table(&rows));
    if let Some(path) = &a.csv {
        write_file(path, &report_csv(&rows))?;
        let manifest = RunManifest {
            command: "leakage".into(),
            scheme: None,
            parameters: Parameters { d: a.d, r: a.r, m: a.m, base: Some(base), ..Default::default() },
            seed: None,
            endpoints: None,
            outputs: vec![path.display().to_string()],
        };
        let mpath = path.with_extension("manifest.json");
        manifest.write(&mpath).map_err(|e| CliError::Failed(format!("{}: {e}", mpath.display())))?;
    }
    Ok(())
}

fn cmd_selftest(a: SelftestArgs) -> Result<(), CliError> {
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let mut failures = 0usize;
    for scheme in Scheme::ALL {
        let mut bad = 0;
        for _ in 0..a.cases {
            let inst = random_instance(&mut rng, scheme);
            let key: [u8; 32] = rng.random();
            if let Err(e) = check_instance(&inst, &mut rng, key) {
                bad += 1;
                eprintln!("mismatch: {e}\n  instance: {inst:?}");
            }
        }
        println!("{scheme:<24} {:>5} instances  {bad} mismatches", a.cases);
        failures += bad;
    }
    if failures > 0 {
        return Err(CliError::Failed(format!("{failures} oracle mismatches")));
    }
    println!("all protocol runs agree with the oracle");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_lists_and_weights() {
        let cli = Cli::try_parse_from([
            "ipcr", "query", "--scheme", "two-phase-actionable", "--x", "1,2,0", "--immutable", "1,3", "--weight", "2=3",
            "--sim", "db.txt",
        ])
        .unwrap();
        let Command::Query(q) = cli.command else { panic!() };
        assert_eq!(q.x, [1, 2, 0]);
        assert_eq!(q.immutable, [1, 3]);
        assert_eq!(q.weights, [(2, 3)]);
        assert_eq!(q.params.scheme, Scheme::TwoPhaseActionable);
        assert!(Cli::try_parse_from(["ipcr", "query", "--x", "1", "--scheme", "bogus"]).is_err());
        assert!(Cli::try_parse_from(["ipcr", "query", "--x", "1", "--weight", "2"]).is_err());
    }
}
