//! A pair of `g`-chains driven by block couplings at the breaking states of
//! an associated chain `Y` with `κ ≥ Y` at every step.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bounds::{level_bound, LogCoshSums};
use super::prefix::{prefix_table, MaximalCoupling};
use super::schedule::BlockSchedule;
use crate::chain::sample_symbol;
use crate::doeblin_fn::{DoeblinFunction, VariationProfile};
use crate::error::{Error, Result};
use crate::sequence::{agreement_length, decode_word, State, Symbol};

/// Agreement at block boundaries is re-verified on the states themselves up
/// to this many coordinates.
const DIRECT_CHECK_CAP: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEvent {
    Climb,
    BlockSuccess,
    BlockFail,
    Renewal,
}

/// State of `Y` after step `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: u64,
    #[serde(rename = "Y")]
    pub y: i64,
    pub level: u32,
    pub event: StepEvent,
    /// Lower bound on `κ` after the step (not exported).
    #[serde(skip)]
    pub kappa: u64,
}

/// One return of `Y` to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excursion {
    pub k: u64,
    #[serde(rename = "T_k")]
    pub t: u64,
    #[serde(rename = "M_k")]
    pub m: u64,
    #[serde(rename = "L_k")]
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: u32,
    #[serde(rename = "B")]
    pub breaking_state: u64,
    pub b: u64,
    pub attempts: u64,
    pub successes: u64,
    pub bound: Option<f64>,
}

impl LevelStats {
    pub fn empirical_success(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.successes as f64 / self.attempts as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTrace {
    pub schedule: BlockSchedule,
    pub steps: Vec<StepRecord>,
    pub excursions: Vec<Excursion>,
    pub levels: Vec<LevelStats>,
    /// `max_n Y^(n) / n` over the run.
    pub max_y_ratio: f64,
    pub steps_run: u64,
    /// Why the run stopped early, if it did.
    pub truncated: Option<String>,
}

impl CouplingTrace {
    /// Step and excursion records as JSON lines, each excursion summary right
    /// after the step that closes it.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut ex = self.excursions.iter().peekable();
        let json = |e: serde_json::Error| Error::Io(e.to_string());
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).map_err(json)?);
            out.push('\n');
            while let Some(e) = ex.next_if(|e| e.t == step.n) {
                out.push_str(&serde_json::to_string(e).map_err(json)?);
                out.push('\n');
            }
        }
        for e in ex {
            out.push_str(&serde_json::to_string(e).map_err(json)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Per-level CSV: `level,B,K,b,bound,empirical_success,attempts,successes`.
    pub fn level_csv(&self) -> String {
        let mut out = String::from("level,B,K,b,bound,empirical_success,attempts,successes\n");
        for l in &self.levels {
            let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                l.level,
                l.breaking_state,
                self.schedule.k(),
                l.b,
                fmt(l.bound),
                fmt(l.empirical_success()),
                l.attempts,
                l.successes
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CouplingOptions {
    /// Cap on prefix-table entries per block.
    pub budget: u128,
    /// Variation profile used to attach certified bounds to level stats.
    pub profile: Option<VariationProfile>,
    /// When set, `Y` climbs after a successful block only with probability
    /// `p_ℓ / P(success)`, so that it is exactly the Markov chain with
    /// parameters `p_ℓ` (last entry repeats).
    pub thinning: Option<Vec<f64>>,
    pub record_steps: bool,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self { budget: super::prefix::DEFAULT_PREFIX_BUDGET, profile: None, thinning: None, record_steps: true }
    }
}

struct Runner<'a, R: Rng + ?Sized> {
    g: &'a DoeblinFunction,
    x: State,
    xt: State,
    kappa: u64,
    n: u64,
    y: i64,
    max_steps: u64,
    past: Vec<Symbol>,
    trace: CouplingTrace,
    record_steps: bool,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Runner<'_, R> {
    fn push(&mut self, a: Symbol, at: Symbol) -> Result<()> {
        self.x.push_front(a)?;
        self.xt.push_front(at)?;
        self.kappa = if a == at { self.kappa + 1 } else { 0 };
        Ok(())
    }

    fn record(&mut self, level: u32, event: StepEvent) -> Result<()> {
        self.n += 1;
        if self.y > 0 && (self.kappa as i64) < self.y {
            return Err(Error::InvariantViolation { step: self.n, kappa: self.kappa, y: self.y });
        }
        if self.y > 0 {
            self.trace.max_y_ratio = self.trace.max_y_ratio.max(self.y as f64 / self.n as f64);
        }
        if self.record_steps {
            self.trace.steps.push(StepRecord { n: self.n, y: self.y, level, event, kappa: self.kappa });
        }
        Ok(())
    }

    fn verify_directly(&self) -> Result<()> {
        if self.y <= 0 {
            return Ok(());
        }
        let need = (self.y as u64).min(DIRECT_CHECK_CAP);
        let got = agreement_length(&self.x, &self.xt, need as usize).value as u64;
        if got < need {
            return Err(Error::InvariantViolation { step: self.n, kappa: got, y: self.y });
        }
        Ok(())
    }

    /// Both chains share their next-symbol laws: extend both by the same
    /// sequentially sampled symbols.
    fn shared_block(&mut self, len: u64) -> Result<()> {
        let s = self.g.alphabet().size();
        let mut law = vec![0.0; s];
        for _ in 0..len {
            self.x.fill_prefix(&mut self.past);
            self.g.eval_window(&self.past, &mut law)?;
            let a = sample_symbol(&law, self.rng);
            self.push(a, a)?;
        }
        Ok(())
    }
}

/// Runs two `g`-chains from `x0` and `x0_tilde` for `max_steps` steps.
///
/// At `Y = B_ℓ` a maximal coupling of the two `b_ℓ`-block laws is drawn; on
/// success `Y` climbs to `B_{ℓ+1}`, on failure the chains extend by
/// independent residual draws and `Y` jumps to `−b_ℓ + 1`, returning to zero
/// at the end of the block. Once the agreement covers every coordinate `g`
/// reads, the two laws coincide and blocks are sampled symbol by symbol.
pub fn run_coupled_chains<R: Rng + ?Sized>(
    g: &DoeblinFunction,
    x0: &State,
    x0_tilde: &State,
    schedule: BlockSchedule,
    max_steps: u64,
    opts: &CouplingOptions,
    rng: &mut R,
) -> Result<CouplingTrace> {
    for x in [x0, x0_tilde] {
        if x.alphabet() != g.alphabet() {
            return Err(Error::AlphabetMismatch { expected: g.alphabet().size(), found: x.alphabet().size() });
        }
    }
    if let Some(p) = &opts.thinning {
        if p.is_empty() || p.iter().any(|&v| !(v > 0.0 && v <= 0.5)) {
            return Err(Error::InvalidParameter("thinning probabilities must lie in (0, 1/2]".into()));
        }
    }
    let s = g.alphabet().size();
    let h = g.horizon();
    let read = g.read_depth() as u64;
    let sums = opts.profile.as_ref().map(LogCoshSums::new);
    let kappa = agreement_length(x0, x0_tilde, h.max(1)).value as u64;
    let mut run = Runner {
        g,
        x: x0.clone(),
        xt: x0_tilde.clone(),
        kappa,
        n: 0,
        y: 0,
        max_steps,
        past: vec![0; h],
        trace: CouplingTrace {
            schedule,
            steps: Vec::new(),
            excursions: Vec::new(),
            levels: Vec::new(),
            max_y_ratio: 0.0,
            steps_run: 0,
            truncated: None,
        },
        record_steps: opts.record_steps,
        rng,
    };
    let mut level: u32 = 0;
    let mut last_renewal = 0u64;
    let mut pair_past = vec![0; h];
    let mut tables: (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut word = Vec::new();
    let mut word_t = Vec::new();
    while run.n < run.max_steps {
        run.verify_directly()?;
        let big_b = schedule.checked_breaking_state(level)?;
        let b = schedule.checked_gap(level)?;
        if run.trace.levels.len() <= level as usize {
            let bound = sums.as_ref().and_then(|s| level_bound(s, &schedule, level).ok());
            run.trace.levels.push(LevelStats { level, breaking_state: big_b, b, attempts: 0, successes: 0, bound });
        }
        let remaining = run.max_steps - run.n;
        let (matched, match_prob, len) = if run.kappa >= read {
            let len = b.min(remaining);
            run.shared_block(len)?;
            (true, 1.0, len)
        } else {
            let entries = g.alphabet().word_count(b as usize).unwrap_or(u128::MAX);
            if entries > opts.budget {
                run.trace.truncated = Some(format!(
                    "block of length {b} at level {level} needs {entries} table entries, budget is {}",
                    opts.budget
                ));
                break;
            }
            let entries = entries as usize;
            tables.0.resize(entries, 0.0);
            tables.1.resize(entries, 0.0);
            run.x.fill_prefix(&mut run.past);
            run.xt.fill_prefix(&mut pair_past);
            prefix_table(g, &run.past, b as usize, &mut tables.0)?;
            prefix_table(g, &pair_past, b as usize, &mut tables.1)?;
            let coupling = MaximalCoupling::new(&tables.0, &tables.1)?;
            let (i, j, matched) = coupling.sample(run.rng);
            word.resize(b as usize, 0);
            word_t.resize(b as usize, 0);
            decode_word(i, s, &mut word);
            decode_word(j, s, &mut word_t);
            for k in (0..b as usize).rev() {
                run.push(word[k], word_t[k])?;
            }
            (matched, coupling.match_prob(), b)
        };
        let stats = &mut run.trace.levels[level as usize];
        stats.attempts += 1;
        stats.successes += matched as u64;
        let climbs = match &opts.thinning {
            None => matched,
            Some(p) => {
                let p = p[(level as usize).min(p.len() - 1)];
                if p > match_prob + 1e-12 {
                    return Err(Error::ContractViolation(format!(
                        "p_{level} = {p} exceeds the actual success probability {match_prob}"
                    )));
                }
                matched && run.rng.random::<f64>() * match_prob < p
            }
        };
        // replay the block step by step for Y
        for i in 1..=len {
            if run.n >= run.max_steps {
                break;
            }
            let event = if climbs {
                run.y = (big_b + i) as i64;
                if i == 1 { StepEvent::BlockSuccess } else { StepEvent::Climb }
            } else {
                run.y = i as i64 - b as i64;
                if run.y == 0 {
                    StepEvent::Renewal
                } else if i == 1 {
                    StepEvent::BlockFail
                } else {
                    StepEvent::Climb
                }
            };
            run.record(level, event)?;
            if event == StepEvent::Renewal {
                let m = run.n - last_renewal;
                let expected = schedule.checked_breaking_state(level + 1)?;
                if m != expected {
                    return Err(Error::ContractViolation(format!("excursion length {m} ≠ B_{} = {expected}", level + 1)));
                }
                let k = run.trace.excursions.len() as u64 + 1;
                run.trace.excursions.push(Excursion { k, t: run.n, m, level });
                last_renewal = run.n;
            }
        }
        // kappa as tracked covers the whole block even when records stop early
        if run.y > 0 && (run.kappa as i64) < run.y {
            return Err(Error::InvariantViolation { step: run.n, kappa: run.kappa, y: run.y });
        }
        level = if climbs { level + 1 } else { 0 };
    }
    run.trace.steps_run = run.n;
    Ok(run.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doeblin_fn::{envelope_family, two_state_fixture};
    use crate::sequence::Alphabet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn bin(text: &str) -> State {
        State::parse(&Alphabet::binary(), text).unwrap()
    }

    #[test]
    fn uniform_always_climbs() {
        let u = DoeblinFunction::uniform(&Alphabet::binary());
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let schedule = BlockSchedule::new(2, 3).unwrap();
        let t = run_coupled_chains(&u, &bin("0|c0"), &bin("1|c1"), schedule, 500, &CouplingOptions::default(), &mut rng).unwrap();
        assert_eq!(t.steps.len(), 500);
        assert!(t.steps.iter().all(|s| s.y == s.n as i64));
        assert!(t.excursions.is_empty());
        assert_eq!(t.max_y_ratio, 1.0);
    }

    #[test]
    fn identical_starts_never_separate() {
        let g = two_state_fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let schedule = BlockSchedule::new(1, 2).unwrap();
        let x = bin("0110|c1");
        let t = run_coupled_chains(&g, &x, &x, schedule, 300, &CouplingOptions::default(), &mut rng).unwrap();
        assert!(t.steps.iter().all(|s| s.y == s.n as i64 && s.kappa >= s.n));
    }

    #[test]
    fn two_state_renewals_have_breaking_lengths() {
        let g = two_state_fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let schedule = BlockSchedule::new(1, 2).unwrap();
        let t = run_coupled_chains(&g, &bin("|c0"), &bin("|c1"), schedule, 2_000, &CouplingOptions::default(), &mut rng).unwrap();
        for e in &t.excursions {
            assert_eq!(e.m, schedule.breaking_state(e.level + 1).unwrap());
        }
        assert!(t.steps.iter().all(|s| s.y <= 0 || s.kappa >= s.y as u64));
    }

    #[test]
    fn envelope_run_is_reproducible_and_dominated() {
        let (g, cert) = envelope_family(1.0, 12).unwrap();
        let schedule = BlockSchedule::new(4, 3).unwrap();
        let spins = Alphabet::spins();
        let x = State::constant(&spins, 1).unwrap();
        let xt = State::constant(&spins, 0).unwrap();
        let opts = CouplingOptions { profile: Some(cert.profile.clone()), ..Default::default() };
        let run = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            run_coupled_chains(&g, &x, &xt, schedule, 5_000, &opts, &mut rng).unwrap()
        };
        let a = run(7);
        assert_eq!(a.to_jsonl().unwrap(), run(7).to_jsonl().unwrap());
        assert!(a.levels[0].bound.unwrap() > 0.0);
        assert!(a.max_y_ratio <= 1.0);
        let first = a.to_jsonl().unwrap().lines().next().unwrap().to_string();
        assert!(first.starts_with("{\"n\":1,\"Y\":"), "{first}");
    }

    #[test]
    fn thinning_rejects_bad_probabilities_and_runs() {
        let (g, cert) = envelope_family(1.0, 12).unwrap();
        let schedule = BlockSchedule::new(4, 3).unwrap();
        let spins = Alphabet::spins();
        let x = State::constant(&spins, 1).unwrap();
        let xt = State::constant(&spins, 0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let bad = CouplingOptions { thinning: Some(vec![0.7]), ..Default::default() };
        assert!(run_coupled_chains(&g, &x, &xt, schedule, 10, &bad, &mut rng).is_err());
        let sums = LogCoshSums::new(&cert.profile);
        let p: Vec<f64> = (0..4).map(|l| level_bound(&sums, &schedule, l).unwrap().min(0.5)).collect();
        let opts = CouplingOptions { thinning: Some(p), ..Default::default() };
        let t = run_coupled_chains(&g, &x, &xt, schedule, 20_000, &opts, &mut rng).unwrap();
        assert!(!t.excursions.is_empty());
    }

    #[test]
    fn oversized_blocks_truncate() {
        let g = two_state_fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let schedule = BlockSchedule::new(30, 2).unwrap();
        let t = run_coupled_chains(&g, &bin("|c0"), &bin("|c1"), schedule, 100, &CouplingOptions::default(), &mut rng).unwrap();
        assert!(t.truncated.is_some());
        assert!(t.steps.is_empty());
    }
}
