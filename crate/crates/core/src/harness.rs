//! Seeded MSE-vs-SNR sweeps and their CSV/JSON output.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::analysis::{exact_power_from_gram, moments};
use crate::channel::{generate, ChannelModel, LargeScaleProfile};
use crate::error::{Error, Result};
use crate::estimators::{blind_estimate, pilot_lmmse_all, statistical_estimate, Method};
use crate::link_sim::{run_block_gram, sample_power};
use crate::precoder::{normalization_alpha, PrecoderState};
use crate::rng::SeedTree;

pub mod checks;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MIMO_THREADS";

/// CSV column order of [`ResultsTable`].
pub const CSV_HEADER: [&str; 11] = [
    "model",
    "estimator",
    "snr_db",
    "M",
    "K",
    "T",
    "trials",
    "mse",
    "mse_stderr",
    "clamp_rate",
    "seed",
];

const TAG_CHANNEL: u64 = 0x43;
const TAG_BLOCK: u64 = 0x42;
const TAG_PILOT: u64 = 0x50;

/// Trials reduced per parallel batch.
const BATCH: usize = 2048;

/// Coherence block length used by the blind estimator. `Infinite` stands for
/// perfect knowledge of the average received power.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockLength {
    Finite(usize),
    Infinite,
}

impl BlockLength {
    fn tag(&self) -> u64 {
        match self {
            BlockLength::Finite(t) => *t as u64,
            BlockLength::Infinite => u64::MAX,
        }
    }
}

impl fmt::Display for BlockLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockLength::Finite(t) => write!(f, "{t}"),
            BlockLength::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for BlockLength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" => Ok(BlockLength::Infinite),
            other => other
                .parse::<usize>()
                .map(BlockLength::Finite)
                .map_err(|_| Error::config(format!("invalid block length `{s}`"))),
        }
    }
}

impl Serialize for BlockLength {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BlockLength::Finite(t) => s.serialize_u64(*t as u64),
            BlockLength::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for BlockLength {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(t) => Ok(BlockLength::Finite(t as usize)),
            Raw::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// Large-scale coefficients: an explicit list, or `"uniform:<beta>"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    List(Vec<f64>),
    Spec(String),
}

impl BetaSpec {
    pub fn profile(&self, users: usize) -> Result<LargeScaleProfile> {
        match self {
            BetaSpec::List(betas) => {
                if betas.len() != users {
                    return Err(Error::config(format!(
                        "betas lists {} users but K = {users}",
                        betas.len()
                    )));
                }
                LargeScaleProfile::new(betas.clone())
            }
            BetaSpec::Spec(spec) => {
                let value = spec
                    .strip_prefix("uniform:")
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::config(format!("betas must be a list or \"uniform:<beta>\", got `{spec}`"))
                    })?;
                LargeScaleProfile::uniform(users, value)
            }
        }
    }
}

/// A sweep over SNR points, block lengths, channel models and estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "K")]
    pub users: usize,
    pub rho_db_grid: Vec<f64>,
    #[serde(rename = "T_grid")]
    pub block_lengths: Vec<BlockLength>,
    pub betas: BetaSpec,
    pub models: Vec<ChannelModel>,
    pub estimators: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    /// Also report the MSE of every user separately.
    #[serde(default)]
    pub per_user: bool,
}

impl Default for SystemConfig {
    /// `M = 100`, `K = 20`, `β_k = 1`, SNR −10..20 dB in 2 dB steps,
    /// `T ∈ {100, 500, ∞}`, 10⁴ trials.
    fn default() -> Self {
        SystemConfig {
            antennas: 100,
            users: 20,
            rho_db_grid: (0..16).map(|i| -10.0 + 2.0 * i as f64).collect(),
            block_lengths: vec![
                BlockLength::Finite(100),
                BlockLength::Finite(500),
                BlockLength::Infinite,
            ],
            betas: BetaSpec::Spec("uniform:1.0".into()),
            models: vec![ChannelModel::Rayleigh, ChannelModel::Keyhole],
            estimators: vec![Method::Statistical, Method::PilotLmmse, Method::Blind],
            trials: 10_000,
            seed: 1,
            per_user: false,
        }
    }
}

/// A configuration that passed [`SystemConfig::validate`].
#[derive(Clone, Debug)]
pub struct ValidatedConfig {
    pub profile: LargeScaleProfile,
    pub precoders: Vec<PrecoderState>,
    pub warnings: Vec<String>,
}

impl SystemConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))
    }

    /// Read a JSON config. Unreadable files are I/O errors, malformed ones
    /// configuration errors.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<ValidatedConfig> {
        if self.antennas == 0 || self.users == 0 {
            return Err(Error::config("M and K must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.rho_db_grid.is_empty() {
            return Err(Error::config("rho_db_grid is empty"));
        }
        if self.models.is_empty() {
            return Err(Error::config("models is empty"));
        }
        if self.estimators.is_empty() {
            return Err(Error::config("estimators is empty"));
        }
        if self.block_lengths.is_empty() {
            return Err(Error::config("T_grid is empty"));
        }
        if let Some(db) = self.rho_db_grid.iter().find(|d| !d.is_finite()) {
            return Err(Error::config(format!("SNR point {db} dB is not finite")));
        }
        if self.block_lengths.contains(&BlockLength::Finite(0)) {
            return Err(Error::config("block lengths must be at least 1"));
        }
        check_unique("rho_db_grid", &self.rho_db_grid)?;
        check_unique("T_grid", &self.block_lengths)?;
        check_unique("models", &self.models)?;
        check_unique("estimators", &self.estimators)?;

        let profile = self.betas.profile(self.users)?;
        let precoders = self
            .rho_db_grid
            .iter()
            .map(|db| normalization_alpha(db_to_linear(*db), self.antennas, &profile))
            .collect::<Result<Vec<_>>>()?;
        let mut warnings = Vec::new();
        if self.antennas <= self.users {
            warnings.push(format!(
                "M = {} <= K = {}: outside the many-antenna regime the blind estimator assumes",
                self.antennas, self.users
            ));
        }
        Ok(ValidatedConfig {
            profile,
            precoders,
            warnings,
        })
    }
}

fn check_unique<T: PartialEq + fmt::Debug>(name: &str, items: &[T]) -> Result<()> {
    for (i, a) in items.iter().enumerate() {
        if items[..i].contains(a) {
            return Err(Error::config(format!("{name} lists {a:?} twice")));
        }
    }
    Ok(())
}

/// `10^(dB/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One `(model, estimator, snr, T)` cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: ChannelModel,
    pub estimator: Method,
    pub snr_db: f64,
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "T")]
    pub block_length: BlockLength,
    pub trials: usize,
    pub mse: f64,
    pub mse_stderr: f64,
    pub clamp_rate: f64,
    pub seed: u64,
}

/// Per-user breakdown of a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub model: ChannelModel,
    pub estimator: Method,
    pub snr_db: f64,
    #[serde(rename = "T")]
    pub block_length: BlockLength,
    pub user: usize,
    pub mse: f64,
    pub mse_stderr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_user: Vec<UserRow>,
}

impl ResultsTable {
    pub fn find(
        &self,
        model: ChannelModel,
        estimator: Method,
        snr_db: f64,
        block_length: BlockLength,
    ) -> Option<&ResultRow> {
        self.rows.iter().find(|r| {
            r.model == model
                && r.estimator == estimator
                && r.snr_db == snr_db
                && r.block_length == block_length
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.model.to_string(),
                r.estimator.to_string(),
                format_sig(r.snr_db),
                r.antennas.to_string(),
                r.users.to_string(),
                r.block_length.to_string(),
                r.trials.to_string(),
                format_sig(r.mse),
                format_sig(r.mse_stderr),
                format_sig(r.clamp_rate),
                r.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn write_per_user_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "estimator", "snr_db", "T", "user", "mse", "mse_stderr"])?;
        for r in &self.per_user {
            w.write_record([
                r.model.to_string(),
                r.estimator.to_string(),
                format_sig(r.snr_db),
                r.block_length.to_string(),
                r.user.to_string(),
                format_sig(r.mse),
                format_sig(r.mse_stderr),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Write the table as CSV (header first, floats to 9 significant digits).
pub fn export_csv(table: &ResultsTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = create(path)?;
    table.write_csv(file).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Write the per-user breakdown as CSV.
pub fn export_per_user_csv(table: &ResultsTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = create(path)?;
    table.write_per_user_csv(file).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn export_json(table: &ResultsTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, table).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    file.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Format like C's `%.9g`: 9 significant digits, trailing zeros dropped,
/// scientific notation outside `[1e-5, 1e9)`.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..DIGITS).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Welford accumulator fed in trial order.
#[derive(Clone, Debug, Default)]
struct Running {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        }
    }
}

/// Squared normalized errors of one estimator for every user in one trial.
#[derive(Clone, Debug)]
struct UnitSample {
    errors: Vec<f64>,
    clamps: usize,
}

impl UnitSample {
    fn mean_error(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }
}

#[derive(Clone, Debug, Default)]
struct UnitStats {
    trial_mean: Running,
    users: Vec<Running>,
    clamps: usize,
}

impl UnitStats {
    fn push(&mut self, s: &UnitSample, per_user: bool) {
        self.trial_mean.push(s.mean_error());
        self.clamps += s.clamps;
        if per_user {
            if self.users.is_empty() {
                self.users = vec![Running::default(); s.errors.len()];
            }
            for (acc, e) in self.users.iter_mut().zip(&s.errors) {
                acc.push(*e);
            }
        }
    }
}

/// Which computation a cell reads its numbers from. Cells that differ only
/// in an irrelevant coordinate share a unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unit {
    Statistical,
    Genie,
    Pilot { snr: usize },
    Blind { snr: usize, block: usize },
}

struct Plan<'a> {
    config: &'a SystemConfig,
    validated: &'a ValidatedConfig,
    units: Vec<Unit>,
    needs_gram: bool,
}

impl<'a> Plan<'a> {
    fn new(config: &'a SystemConfig, validated: &'a ValidatedConfig) -> Self {
        let mut units = Vec::new();
        for method in &config.estimators {
            match method {
                Method::Statistical => units.push(Unit::Statistical),
                Method::Genie => units.push(Unit::Genie),
                Method::PilotLmmse => units.extend((0..config.rho_db_grid.len()).map(|snr| Unit::Pilot { snr })),
                Method::Blind => {
                    for snr in 0..config.rho_db_grid.len() {
                        units.extend((0..config.block_lengths.len()).map(|block| Unit::Blind { snr, block }));
                    }
                }
            }
        }
        let needs_gram = units
            .iter()
            .any(|u| matches!(u, Unit::Pilot { .. } | Unit::Blind { .. }));
        Plan {
            config,
            validated,
            units,
            needs_gram,
        }
    }

    fn unit_index(&self, method: Method, snr: usize, block: usize) -> usize {
        let target = match method {
            Method::Statistical => Unit::Statistical,
            Method::Genie => Unit::Genie,
            Method::PilotLmmse => Unit::Pilot { snr },
            Method::Blind => Unit::Blind { snr, block },
        };
        self.units.iter().position(|u| *u == target).expect("unit planned")
    }

    fn trial(&self, model: ChannelModel, root: &SeedTree, t: u64) -> Result<Vec<UnitSample>> {
        let cfg = self.config;
        let profile = &self.validated.profile;
        let users = cfg.users;
        let ch = generate(
            model,
            cfg.antennas,
            profile,
            &mut root.child(TAG_CHANNEL).child(model.tag()).stream(t),
        )?;
        let gram = if self.needs_gram { Some(ch.gram()) } else { None };
        let truths: Vec<f64> = match &gram {
            Some(g) => (0..users).map(|k| g.gain(k)).collect(),
            None => ch.columns().map(|c| c.iter().map(|z| z.norm_sqr()).sum()).collect(),
        };
        let mean_gains: Vec<f64> = profile
            .betas()
            .iter()
            .map(|b| statistical_estimate(cfg.antennas, *b))
            .collect();
        let score = |estimates: &[f64], clamps: usize| UnitSample {
            errors: estimates
                .iter()
                .zip(&truths)
                .zip(&mean_gains)
                .map(|((a, g), mu)| ((a - g) / mu).powi(2))
                .collect(),
            clamps,
        };

        let mut out = Vec::with_capacity(self.units.len());
        for unit in &self.units {
            let sample = match *unit {
                Unit::Statistical => score(&mean_gains, 0),
                Unit::Genie => score(&truths, 0),
                Unit::Pilot { snr } => {
                    let gram = gram.as_ref().expect("gram computed");
                    let mut rng = root
                        .child(TAG_PILOT)
                        .child(model.tag())
                        .child_f64(cfg.rho_db_grid[snr])
                        .stream(t);
                    let est = pilot_lmmse_all(
                        gram,
                        &self.validated.precoders[snr],
                        profile,
                        model,
                        cfg.antennas,
                        &mut rng,
                    )?;
                    let values: Vec<f64> = est.iter().map(|e| e.value).collect();
                    score(&values, est.iter().filter(|e| e.clamped).count())
                }
                Unit::Blind { snr, block } => {
                    let gram = gram.as_ref().expect("gram computed");
                    let state = &self.validated.precoders[snr];
                    let length = cfg.block_lengths[block];
                    let xi: Vec<f64> = match length {
                        BlockLength::Infinite => (0..users)
                            .map(|k| exact_power_from_gram(gram, state.alpha(), k))
                            .collect(),
                        BlockLength::Finite(len) => {
                            let mut rng = root
                                .child(TAG_BLOCK)
                                .child(model.tag())
                                .child_f64(cfg.rho_db_grid[snr])
                                .child(length.tag())
                                .stream(t);
                            let b = run_block_gram(gram, state, len, &mut rng)?;
                            (0..users).map(|k| sample_power(&b, k)).collect::<Result<_>>()?
                        }
                    };
                    let mut clamps = 0;
                    let mut values = Vec::with_capacity(users);
                    for (k, x) in xi.iter().enumerate() {
                        let est = blind_estimate(*x, state.alpha(), profile.sum_excluding(k)?)?;
                        clamps += est.clamped as usize;
                        values.push(est.value);
                    }
                    score(&values, clamps)
                }
            };
            out.push(sample);
        }
        Ok(out)
    }
}

/// Run every cell of the sweep.
///
/// Results depend only on the configuration: trial `t` of a cell always
/// draws from the same substreams, and trials are reduced in index order.
/// The channel of trial `t` is shared by all cells of the same model.
pub fn run_experiment(config: &SystemConfig) -> Result<ResultsTable> {
    let validated = config.validate()?;
    let plan = Plan::new(config, &validated);
    let root = SeedTree::new(config.seed);
    let mut table = ResultsTable::default();

    for &model in &config.models {
        // validate the prior the pilot estimator will need before any work
        for b in validated.profile.betas() {
            moments(model, config.antennas, *b)?;
        }
        let mut stats = vec![UnitStats::default(); plan.units.len()];
        let mut start = 0usize;
        while start < config.trials {
            let end = (start + BATCH).min(config.trials);
            let batch: Vec<Vec<UnitSample>> = (start as u64..end as u64)
                .into_par_iter()
                .map(|t| plan.trial(model, &root, t))
                .collect::<Result<_>>()?;
            for samples in &batch {
                for (acc, s) in stats.iter_mut().zip(samples) {
                    acc.push(s, config.per_user);
                }
            }
            start = end;
        }

        for &method in &config.estimators {
            for (si, &snr_db) in config.rho_db_grid.iter().enumerate() {
                for (bi, &block_length) in config.block_lengths.iter().enumerate() {
                    let unit = &stats[plan.unit_index(method, si, bi)];
                    table.rows.push(ResultRow {
                        model,
                        estimator: method,
                        snr_db,
                        antennas: config.antennas,
                        users: config.users,
                        block_length,
                        trials: config.trials,
                        mse: unit.trial_mean.mean,
                        mse_stderr: unit.trial_mean.stderr(),
                        clamp_rate: unit.clamps as f64 / (config.trials * config.users) as f64,
                        seed: config.seed,
                    });
                    for (user, acc) in unit.users.iter().enumerate() {
                        table.per_user.push(UserRow {
                            model,
                            estimator: method,
                            snr_db,
                            block_length,
                            user,
                            mse: acc.mean,
                            mse_stderr: acc.stderr(),
                        });
                    }
                }
            }
        }
    }
    Ok(table)
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Run `f` on a dedicated pool with `workers` threads (the global pool when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
