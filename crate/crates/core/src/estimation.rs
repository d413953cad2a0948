//! Channel estimation: centralized least squares, data cooperation (DC),
//! interference cooperation (IC) and the Cramér-Rao bound.
//!
//! In IC, operator `k` estimates its column group `H_k = [H_k1; …; H_kK]`,
//! the channel from its own transmitters to every receiver, using only its
//! own training `X̄_k`. Each round has two phases:
//!
//! 1. every operator `m` forwards to each peer `k` the residual of its
//!    received training after removing its own direct contribution and the
//!    re-encoded contributions of the other peers;
//! 2. operator `k` fits `H_km` to that residual and returns the re-encoded
//!    product `H_km X̄_k`, which `m` subtracts in the next round.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::backhaul::{
    run_rounds, BusOptions, Inbox, InterferenceMessage, MessageKind, Protocol, RoundLog, RoundNode,
};
use crate::linalg::{self, RightPseudoInverse};
use crate::metrics::{self, BlockMse, Normalization};
use crate::model::MultiOperatorChannel;
use crate::training::{OperatorTraining, TrainingSet};
use crate::{CMatrix, Error, Result};

/// Which operator holds an estimate and therefore which blocks it may contain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "operator", rename_all = "snake_case")]
pub enum Holder {
    /// All blocks (system-wide estimator with shared training).
    Centralized,
    /// Blocks `H_km` for every `m`: the channel from operator `k`'s lines.
    ColumnGroup(usize),
    /// Blocks `H_mk` for every `m`: the channel into operator `k`'s receivers.
    RowGroup(usize),
}

/// Estimated channel blocks of one holder.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelEstimate {
    operators: usize,
    lines: usize,
    holder: Holder,
    /// Indexed `from * K + to`.
    blocks: Vec<Option<CMatrix>>,
    updated_at: Vec<Option<usize>>,
}

impl ChannelEstimate {
    fn empty(operators: usize, lines: usize, holder: Holder) -> Self {
        let n = operators * operators;
        Self { operators, lines, holder, blocks: vec![None; n], updated_at: vec![None; n] }
    }

    /// Whether `holder` is allowed to hold block `from → to`.
    pub fn may_hold(holder: Holder, from: usize, to: usize) -> bool {
        match holder {
            Holder::Centralized => true,
            Holder::ColumnGroup(k) => from == k,
            Holder::RowGroup(k) => to == k,
        }
    }

    fn set(&mut self, from: usize, to: usize, block: CMatrix, iteration: usize) -> Result<()> {
        if !Self::may_hold(self.holder, from, to) {
            return Err(Error::Protocol(format!(
                "{:?} cannot hold channel block {from} -> {to}",
                self.holder
            )));
        }
        if block.shape() != (self.lines, self.lines) {
            return Err(Error::dims("channel block", self.lines, format!("{:?}", block.shape())));
        }
        let i = from * self.operators + to;
        self.blocks[i] = Some(block);
        self.updated_at[i] = Some(iteration);
        Ok(())
    }

    pub fn holder(&self) -> Holder {
        self.holder
    }

    pub fn operators(&self) -> usize {
        self.operators
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    /// Block `H_{from,to}` if this holder has it.
    pub fn block(&self, from: usize, to: usize) -> Option<&CMatrix> {
        self.blocks.get(from * self.operators + to)?.as_ref()
    }

    /// Iteration at which block `from → to` was last written.
    pub fn updated_at(&self, from: usize, to: usize) -> Option<usize> {
        *self.updated_at.get(from * self.operators + to)?
    }

    /// `(from, to)` of every block present.
    pub fn held_blocks(&self) -> Vec<(usize, usize)> {
        (0..self.operators)
            .flat_map(|f| (0..self.operators).map(move |t| (f, t)))
            .filter(|&(f, t)| self.block(f, t).is_some())
            .collect()
    }

    /// Full channel, if every block is present.
    pub fn to_channel(&self) -> Result<MultiOperatorChannel> {
        let grid = (0..self.operators)
            .map(|from| {
                (0..self.operators)
                    .map(|to| {
                        self.block(from, to).cloned().ok_or_else(|| {
                            Error::InvalidArgument(format!("estimate lacks block {from} -> {to}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        MultiOperatorChannel::from_blocks(&grid)
    }
}

/// Stitch per-operator estimates into the full channel.
///
/// Used by the simulator to score a distributed run; no operator ever calls it.
pub fn assemble(parts: &[ChannelEstimate]) -> Result<MultiOperatorChannel> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("no estimates to assemble".into()))?;
    let (k, n) = (first.operators, first.lines);
    let mut merged = ChannelEstimate::empty(k, n, Holder::Centralized);
    for p in parts {
        if (p.operators, p.lines) != (k, n) {
            return Err(Error::dims("estimate shape", k * n, p.operators * p.lines));
        }
        for (from, to) in p.held_blocks() {
            let block = p.block(from, to).cloned().unwrap_or_default();
            merged.set(from, to, block, p.updated_at(from, to).unwrap_or(0))?;
        }
    }
    merged.to_channel()
}

fn check_received(received: &CMatrix, rows: usize, cols: usize, what: &'static str) -> Result<()> {
    if received.shape() != (rows, cols) {
        return Err(Error::dims(what, format!("{rows}x{cols}"), format!("{:?}", received.shape())));
    }
    Ok(())
}

/// System-wide least squares `Ĥ = Y X̄ᴴ (X̄ X̄ᴴ)⁻¹`.
pub fn mle_centralized(received: &CMatrix, training: &TrainingSet) -> Result<ChannelEstimate> {
    let (k, n) = (training.operators(), training.lines());
    check_received(received, k * n, training.length(), "received training")?;
    let pinv = RightPseudoInverse::new(training.full(), "stacked training")?;
    let h = MultiOperatorChannel::from_full(k, n, pinv.apply(received)?)?;
    let mut est = ChannelEstimate::empty(k, n, Holder::Centralized);
    for from in 0..k {
        for to in 0..k {
            est.set(from, to, h.block(from, to), 1)?;
        }
    }
    Ok(est)
}

/// Data-cooperation estimate of the row group `[H_1k … H_Kk]` from operator
/// `k`'s received training and the shared stacked training.
pub fn dc_estimate(operator: usize, received: &CMatrix, training: &TrainingSet) -> Result<ChannelEstimate> {
    let (k, n) = (training.operators(), training.lines());
    if operator >= k {
        return Err(Error::InvalidArgument(format!("no operator {operator}")));
    }
    check_received(received, n, training.length(), "received training of one operator")?;
    let pinv = RightPseudoInverse::new(training.full(), "stacked training")?;
    let g = pinv.apply(received)?;
    let mut est = ChannelEstimate::empty(k, n, Holder::RowGroup(operator));
    for from in 0..k {
        est.set(from, operator, g.columns(from * n, n).into_owned(), 1)?;
    }
    Ok(est)
}

/// Cramér-Rao bound of the least-squares estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Crb {
    /// `tr[σ² (X̄ X̄ᴴ)⁻¹]`: error bound for one receiver row of `H`.
    pub trace: f64,
    /// Average bound per channel entry (`σ²/T` for orthogonal unit-power training).
    pub per_entry: f64,
}

impl Crb {
    /// Bound normalized like [`metrics::normalized_mse`] with ensemble powers.
    pub fn normalized(&self, lines: usize, alpha: f64) -> BlockMse {
        let n = lines as f64;
        let self_power = 1.0 + (n - 1.0) * alpha * alpha;
        let alien = if alpha > 0.0 { Some(self.per_entry / (alpha * alpha)) } else { None };
        BlockMse { self_blocks: self.per_entry * n / self_power, alien_blocks: alien }
    }
}

pub fn crb(sigma2: f64, training: &CMatrix) -> Result<Crb> {
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidArgument("noise power must be non-negative".into()));
    }
    let rows = training.nrows();
    if rows == 0 || rows > training.ncols() {
        return Err(Error::dims("training for the bound", format!("rows <= {}", training.ncols()), rows));
    }
    // X̄ᴴ = QR gives X̄X̄ᴴ = RᴴR, so tr[(X̄X̄ᴴ)⁻¹] = ‖R⁻¹‖²_F.
    let r = training.adjoint().qr().r();
    linalg::check_triangular_rank(&r, "training Gram matrix")?;
    let identity = CMatrix::identity(rows, rows);
    let r_inv = r
        .solve_upper_triangular(&identity)
        .ok_or(Error::RankDeficient { what: "training Gram matrix" })?;
    let trace = sigma2 * linalg::frobenius_sq(&r_inv);
    Ok(Crb { trace, per_entry: trace / rows as f64 })
}

/// First self-block estimate `Y_k X̄_kᴴ (X̄_k X̄_kᴴ)⁻¹`, alien FEXT treated as noise.
pub fn ic_init(received: &CMatrix, training: &OperatorTraining) -> Result<CMatrix> {
    check_received(received, training.block().nrows(), training.length(), "received training of one operator")?;
    training.fit(received)
}

/// Order of the self-block update within an IC estimation round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Refresh `H_kk` from the newest re-encodings before forming residuals.
    #[default]
    SelfFirst,
    /// Every block of round `n + 1` depends only on round `n` (plain block Jacobi).
    Jacobi,
}

/// State of one operator in IC estimation.
#[derive(Clone, Debug)]
pub struct IcEstimationNode {
    id: usize,
    operators: usize,
    training: OperatorTraining,
    received: CMatrix,
    schedule: Schedule,
    estimate: ChannelEstimate,
    /// `H_mk X̄_m` from each peer `m`, as of the last completed round.
    reencoded_in: BTreeMap<usize, CMatrix>,
}

impl IcEstimationNode {
    pub fn new(
        id: usize,
        operators: usize,
        training: OperatorTraining,
        received: CMatrix,
        schedule: Schedule,
    ) -> Result<Self> {
        if id >= operators || training.operator() != id {
            return Err(Error::InvalidArgument(format!("training of operator {} given to node {id}", training.operator())));
        }
        let lines = training.block().nrows();
        let init = ic_init(&received, &training)?;
        let mut estimate = ChannelEstimate::empty(operators, lines, Holder::ColumnGroup(id));
        estimate.set(id, id, init, 0)?;
        for m in (0..operators).filter(|&m| m != id) {
            estimate.set(id, m, CMatrix::zeros(lines, lines), 0)?;
        }
        Ok(Self { id, operators, training, received, schedule, estimate, reencoded_in: BTreeMap::new() })
    }

    pub fn estimate(&self) -> &ChannelEstimate {
        &self.estimate
    }

    pub fn into_estimate(self) -> ChannelEstimate {
        self.estimate
    }

    fn peers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.operators).filter(move |&m| m != self.id)
    }

    fn self_block(&self) -> &CMatrix {
        self.estimate.block(self.id, self.id).expect("self block is always held")
    }

    /// `H_kk` fitted to `Y_k` minus all received re-encodings.
    fn refit_self(&self) -> Result<CMatrix> {
        let mut z = self.received.clone();
        for e in self.reencoded_in.values() {
            z -= e;
        }
        self.training.fit(&z)
    }

    fn residuals(&self, round: usize) -> Result<Vec<InterferenceMessage>> {
        let self_block = self.self_block();
        self.peers()
            .map(|k| {
                let others: Vec<&CMatrix> = self
                    .reencoded_in
                    .iter()
                    .filter(|(&p, _)| p != k)
                    .map(|(_, e)| e)
                    .collect();
                InterferenceMessage::est_residual(round, self.id, k, &self.received, self_block, &self.training, &others)
            })
            .collect()
    }
}

impl RoundNode for IcEstimationNode {
    fn id(&self) -> usize {
        self.id
    }

    fn emit(&mut self, round: usize, phase: usize) -> Result<Vec<InterferenceMessage>> {
        match phase {
            0 => {
                let fresh_self = if round > 1 { Some(self.refit_self()?) } else { None };
                if self.schedule == Schedule::SelfFirst {
                    if let Some(h) = fresh_self.clone() {
                        self.estimate.set(self.id, self.id, h, round)?;
                    }
                }
                let out = self.residuals(round)?;
                if self.schedule == Schedule::Jacobi {
                    let h = fresh_self.unwrap_or_else(|| self.self_block().clone());
                    self.estimate.set(self.id, self.id, h, round)?;
                }
                Ok(out)
            }
            1 => self
                .peers()
                .map(|m| {
                    let block = self.estimate.block(self.id, m).expect("alien block is always held");
                    InterferenceMessage::reencoded(round, self.id, m, block, &self.training)
                })
                .collect(),
            _ => Err(Error::Protocol(format!("estimation has no phase {phase}"))),
        }
    }

    fn absorb(&mut self, round: usize, phase: usize, inbox: Vec<InterferenceMessage>) -> Result<()> {
        let kind = if phase == 0 { MessageKind::EstResidual } else { MessageKind::EstReencoded };
        let peers: Vec<usize> = self.peers().collect();
        let inbox = Inbox::collect(self.id, round, phase, kind, peers, inbox)?;
        match phase {
            0 => {
                for (m, residual) in inbox.into_payloads() {
                    let h = self.training.fit(&residual)?;
                    self.estimate.set(self.id, m, h, round)?;
                }
            }
            _ => self.reencoded_in = inbox.into_payloads(),
        }
        Ok(())
    }
}

/// Settings for [`run_ic_estimation`].
#[derive(Clone, Debug, Default)]
pub struct IcEstimationOptions {
    pub rounds: usize,
    pub schedule: Schedule,
    /// Stop once the largest relative block change of a round falls below this.
    pub early_stop: Option<f64>,
    pub bus: BusOptions,
}

/// Result of a distributed estimation run.
#[derive(Debug)]
pub struct IcEstimationRun {
    /// Column-group estimate of each operator after the last round.
    pub estimates: Vec<ChannelEstimate>,
    /// Assembled channel after each round; entry 0 is the initial state.
    pub snapshots: Vec<MultiOperatorChannel>,
    pub log: RoundLog,
}

/// Run distributed IC estimation: `received` is the stacked `Y` (`KN × T`),
/// `training` is split so that node `k` only ever gets `X̄_k`.
pub fn run_ic_estimation(
    received: &CMatrix,
    training: &TrainingSet,
    options: &IcEstimationOptions,
) -> Result<IcEstimationRun> {
    let (k, n) = (training.operators(), training.lines());
    check_received(received, k * n, training.length(), "received training")?;
    let mut nodes = training
        .split()?
        .into_iter()
        .enumerate()
        .map(|(id, t)| {
            let y = received.rows(id * n, n).into_owned();
            IcEstimationNode::new(id, k, t, y, options.schedule)
        })
        .collect::<Result<Vec<_>>>()?;
    let snapshot = |nodes: &[IcEstimationNode]| {
        assemble(&nodes.iter().map(|n| n.estimate.clone()).collect::<Vec<_>>())
    };
    let mut snapshots = vec![snapshot(&nodes)?];
    let log = run_rounds(&mut nodes, Protocol::IcEst, options.rounds, &options.bus, |_, nodes| {
        let current = snapshot(nodes)?;
        let change = max_block_change(&current, snapshots.last().expect("initial snapshot"));
        snapshots.push(current);
        Ok(match options.early_stop {
            Some(tol) if change < tol => ControlFlow::Break(()),
            _ => ControlFlow::Continue(()),
        })
    })?;
    Ok(IcEstimationRun {
        estimates: nodes.into_iter().map(IcEstimationNode::into_estimate).collect(),
        snapshots,
        log,
    })
}

/// Largest relative Frobenius change over all blocks.
fn max_block_change(a: &MultiOperatorChannel, b: &MultiOperatorChannel) -> f64 {
    let k = a.operators();
    let mut worst: f64 = 0.0;
    for from in 0..k {
        for to in 0..k {
            worst = worst.max(linalg::relative_difference(&a.block(from, to), &b.block(from, to)));
        }
    }
    worst
}

/// One row of an estimation trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationRow {
    pub iteration: usize,
    pub mse_self_db: f64,
    pub mse_alien_db: Option<f64>,
    /// Per-entry bound `σ²/T`-style, in dB.
    pub crb_db: f64,
    pub crb_self_db: f64,
    pub crb_alien_db: Option<f64>,
    /// `‖Y − Ĥ X̄‖_F`.
    pub residual: f64,
    pub msgs_sent: usize,
}

/// Per-iteration MSE of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimationTrace {
    pub rows: Vec<EstimationRow>,
}

impl EstimationTrace {
    /// Score every snapshot of `run` against the true channel.
    pub fn from_run(
        run: &IcEstimationRun,
        truth: &MultiOperatorChannel,
        received: &CMatrix,
        training: &TrainingSet,
        bound: &Crb,
        normalization: Normalization,
    ) -> Result<Self> {
        let alpha = match normalization {
            Normalization::Ensemble { alpha } => alpha,
            Normalization::Realization => 0.0,
        };
        let crb_norm = bound.normalized(truth.lines(), alpha);
        let rows = run
            .snapshots
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let mse = metrics::normalized_mse(h, truth, normalization)?;
                let residual = linalg::frobenius_sq(&(received - h.full() * training.full())).sqrt();
                Ok(EstimationRow {
                    iteration: i,
                    mse_self_db: mse.self_db(),
                    mse_alien_db: mse.alien_db(),
                    crb_db: metrics::mse_db(bound.per_entry),
                    crb_self_db: crb_norm.self_db(),
                    crb_alien_db: crb_norm.alien_db(),
                    residual,
                    msgs_sent: run.log.messages.iter().filter(|m| m.round == i).count(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
