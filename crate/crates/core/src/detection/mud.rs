//! Multi-user detection schemes: centralized, data cooperation (DC),
//! interference cooperation (IC) and no cooperation.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::dfe::{detect_with_priors, DfeFactorization, DfeMode, DfeOutput, Priors};
use super::soft::{posterior_variance, Decision};
use crate::backhaul::{run_rounds, BusOptions, Inbox, InterferenceMessage, MessageKind, Protocol, RoundLog, RoundNode};
use crate::linalg::{condition_number, frobenius_sq};
use crate::metrics::DecisionPower;
use crate::model::{Constellation, MultiOperatorChannel};
use crate::{CMatrix, Error, Result};

/// Condition number above which the ZF inverse is refused.
pub const ZF_CONDITION_LIMIT: f64 = 1e12;

/// Detector configuration shared by all schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MudSettings {
    pub constellation: Constellation,
    pub decision: Decision,
    pub dfe: DfeMode,
}

impl MudSettings {
    pub fn new(constellation: Constellation) -> Self {
        Self { constellation, decision: Decision::Soft, dfe: DfeMode::Mmse }
    }

    pub fn with_decision(mut self, decision: Decision) -> Self {
        self.decision = decision;
        self
    }

    pub fn with_dfe(mut self, dfe: DfeMode) -> Self {
        self.dfe = dfe;
        self
    }
}

/// Increase of decision noise of DC over centralized detection:
/// `1 + N(K−1)α² / (1 + (N−1)α²)`.
pub fn dc_loss(lines: usize, operators: usize, alpha: f64) -> f64 {
    let (n, k, a2) = (lines as f64, operators as f64, alpha * alpha);
    1.0 + n * (k - 1.0) * a2 / (1.0 + (n - 1.0) * a2)
}

/// Initial decision-noise variance when alien FEXT is treated as noise:
/// `((K−1)Nα² + σ²) / (1 + (N−1)α²)`.
pub fn init_variance_dc(lines: usize, operators: usize, alpha: f64, sigma2: f64) -> f64 {
    let n = lines as f64;
    interference_noise(lines, operators, alpha, sigma2) / (1.0 + (n - 1.0) * alpha * alpha)
}

/// Alien FEXT plus noise power per receiver: `(K−1)Nα² + σ²`.
pub fn interference_noise(lines: usize, operators: usize, alpha: f64, sigma2: f64) -> f64 {
    (operators as f64 - 1.0) * lines as f64 * alpha * alpha + sigma2
}

/// Residual power per observation `‖z − H x̂‖²_F / (rows · frames)`, floored
/// at `10⁻⁶ σ²`.
pub fn update_sigma_n(z: &CMatrix, h: &CMatrix, symbols: &CMatrix, sigma2: f64) -> Result<f64> {
    if h.nrows() != z.nrows() || h.ncols() != symbols.nrows() || z.ncols() != symbols.ncols() {
        return Err(Error::dims(
            "residual operands",
            format!("{}x{}", z.nrows(), z.ncols()),
            format!("{}x{} times {}x{}", h.nrows(), h.ncols(), symbols.nrows(), symbols.ncols()),
        ));
    }
    let residual = frobenius_sq(&(z - h * symbols)) / z.len().max(1) as f64;
    Ok(residual.max(1e-6 * sigma2))
}

/// Mean posterior variance of a DFE output, i.e. how unreliable the fed-back
/// symbols still are.
fn mean_posterior_variance(out: &DfeOutput, settings: &MudSettings) -> f64 {
    let d = &out.unbiased;
    if d.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for f in 0..d.ncols() {
        for i in 0..d.nrows() {
            total += match settings.decision {
                Decision::Linear => out.layer_variance[i].min(1.0),
                _ => posterior_variance(d[(i, f)], out.layer_variance[i], settings.constellation),
            };
        }
    }
    total / d.len() as f64
}

/// Unregularized inverse with nearest-point slicing.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearEstimate {
    pub soft: CMatrix,
    pub sliced: CMatrix,
}

/// `x̂ = H⁻¹ y`, then slicing.
pub fn zf_centralized(y: &CMatrix, h: &CMatrix, constellation: Constellation) -> Result<LinearEstimate> {
    if !h.is_square() || h.nrows() != y.nrows() {
        return Err(Error::dims("zero-forcing channel", y.nrows(), format!("{:?}", h.shape())));
    }
    let condition = condition_number(h);
    if !(condition < ZF_CONDITION_LIMIT) {
        return Err(Error::IllConditioned { condition });
    }
    let soft = h
        .clone()
        .lu()
        .solve(y)
        .ok_or(Error::RankDeficient { what: "zero-forcing channel" })?;
    let sliced = soft.map(|z| constellation.slice(z));
    Ok(LinearEstimate { soft, sliced })
}

/// Joint MMSE matrix DFE on the full channel.
pub fn mmse_centralized(
    y: &CMatrix,
    h: &CMatrix,
    sigma2: f64,
    constellation: Constellation,
    decision: Decision,
) -> Result<DfeOutput> {
    DfeFactorization::new(h, DfeMode::Mmse, sigma2)?.detect(y, constellation, decision)
}

/// Single-operator DFE on `H_kk`, all alien FEXT treated as noise of power
/// `noise` (see [`interference_noise`]).
pub fn no_coop_mud(received: &CMatrix, self_block: &CMatrix, noise: f64, settings: &MudSettings) -> Result<DfeOutput> {
    DfeFactorization::new(self_block, settings.dfe, noise)?.detect(received, settings.constellation, settings.decision)
}

/// Per-layer mean posterior variance of a previous output.
fn layer_reliability(out: &DfeOutput, settings: &MudSettings) -> Vec<f64> {
    let d = &out.unbiased;
    let frames = d.ncols().max(1) as f64;
    (0..d.nrows())
        .map(|i| {
            let total: f64 =
                (0..d.ncols()).map(|f| posterior_variance(d[(i, f)], out.layer_variance[i], settings.constellation)).sum();
            (total / frames).min(1.0)
        })
        .collect()
}

/// DFE of `z` on `h`. With soft or hard decisions, an MMSE DFE and a
/// previous output of the same layers, the layers not yet decided in this
/// pass are cancelled with the previous decisions.
pub fn refine(
    h: &CMatrix,
    z: &CMatrix,
    noise: f64,
    previous: Option<&DfeOutput>,
    settings: &MudSettings,
) -> Result<DfeOutput> {
    match previous {
        Some(prev)
            if settings.decision != Decision::Linear
                && settings.dfe == DfeMode::Mmse
                && noise > 0.0
                && prev.symbols.shape() == (h.ncols(), z.ncols()) =>
        {
            let variance = layer_reliability(prev, settings);
            let priors = Priors { symbols: &prev.symbols, variance: &variance };
            detect_with_priors(h, z, noise, priors, settings.constellation, settings.decision)
        }
        _ => DfeFactorization::new(h, settings.dfe, noise)?.detect(z, settings.constellation, settings.decision),
    }
}

/// Local refinement of one IC (or full-CSI) iteration: DFE of `z_k` on the
/// tall `H_k`, then the residual-based noise update.
pub fn ic_mud_round(
    column_group: &CMatrix,
    z: &CMatrix,
    sigma_n2: f64,
    sigma2: f64,
    previous: Option<&DfeOutput>,
    settings: &MudSettings,
) -> Result<(DfeOutput, f64)> {
    let out = refine(column_group, z, sigma_n2, previous, settings)?;
    let next = update_sigma_n(z, column_group, &out.symbols, sigma2)?;
    Ok((out, next))
}

/// State of all operators after one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct MudSnapshot {
    /// Fed-back symbols, stacked (`KN × L`).
    pub symbols: CMatrix,
    /// Unbiased decision variables, stacked.
    pub decisions: CMatrix,
    /// Noise variance each operator will use next.
    pub sigma_n2: Vec<f64>,
}

impl MudSnapshot {
    fn stack<'a>(parts: impl Iterator<Item = (&'a DfeOutput, f64)>) -> Self {
        let parts: Vec<_> = parts.collect();
        let rows: usize = parts.iter().map(|(o, _)| o.symbols.nrows()).sum();
        let cols = parts.first().map_or(0, |(o, _)| o.symbols.ncols());
        let mut symbols = CMatrix::zeros(rows, cols);
        let mut decisions = CMatrix::zeros(rows, cols);
        let mut r = 0;
        for (o, _) in &parts {
            let n = o.symbols.nrows();
            symbols.rows_mut(r, n).copy_from(&o.symbols);
            decisions.rows_mut(r, n).copy_from(&o.unbiased);
            r += n;
        }
        Self { symbols, decisions, sigma_n2: parts.iter().map(|(_, s)| *s).collect() }
    }
}

/// Outcome of a detection run; snapshot 0 is the initialization.
#[derive(Debug)]
pub struct MudRun {
    pub snapshots: Vec<MudSnapshot>,
    pub log: Option<RoundLog>,
}

impl MudRun {
    pub fn last(&self) -> &MudSnapshot {
        self.snapshots.last().expect("a run has at least its initial snapshot")
    }
}

fn check_frame(received: &CMatrix, rows: usize) -> Result<()> {
    if received.nrows() != rows || received.ncols() == 0 {
        return Err(Error::dims("received frame rows", rows, received.nrows()));
    }
    Ok(())
}

/// Centralized detection with full CSI: joint MMSE DFE, then the same
/// per-operator refinement as IC but computed in one place.
pub fn centralized_mud(
    channel: &MultiOperatorChannel,
    received: &CMatrix,
    sigma2: f64,
    settings: &MudSettings,
    rounds: usize,
) -> Result<MudRun> {
    let (k, n) = (channel.operators(), channel.lines());
    check_frame(received, k * n)?;
    let init = mmse_centralized(received, channel.full(), sigma2, settings.constellation, settings.decision)?;
    let groups: Vec<CMatrix> = (0..k).map(|op| channel.column_group(op)).collect();
    let mut outputs: Vec<DfeOutput> = (0..k)
        .map(|op| DfeOutput {
            symbols: init.symbols.rows(op * n, n).into_owned(),
            biased: init.biased.rows(op * n, n).into_owned(),
            unbiased: init.unbiased.rows(op * n, n).into_owned(),
            layer_variance: init.layer_variance[op * n..(op + 1) * n].to_vec(),
        })
        .collect();
    // Expected residual interference left by the initial decisions.
    let reliability = mean_posterior_variance(&init, settings);
    let mut sigma: Vec<f64> = (0..k)
        .map(|op| {
            let alien: f64 = (0..k).filter(|&m| m != op).map(|m| frobenius_sq(&groups[m])).sum();
            sigma2 + reliability * alien / (k * n) as f64
        })
        .collect();
    let mut snapshots = vec![MudSnapshot::stack(outputs.iter().zip(sigma.iter().copied()))];
    for _ in 0..rounds {
        let mut next = Vec::with_capacity(k);
        for op in 0..k {
            let mut z = received.clone();
            for m in (0..k).filter(|&m| m != op) {
                z -= &groups[m] * &outputs[m].symbols;
            }
            next.push(ic_mud_round(&groups[op], &z, sigma[op], sigma2, Some(&outputs[op]), settings)?);
        }
        outputs = next.iter().map(|(o, _)| o.clone()).collect();
        sigma = next.iter().map(|(_, s)| *s).collect();
        snapshots.push(MudSnapshot::stack(outputs.iter().zip(sigma.iter().copied())));
    }
    Ok(MudRun { snapshots, log: None })
}

/// One operator in IC detection. Holds its column group `H_k` (`KN × N`).
#[derive(Clone, Debug)]
pub struct IcMudNode {
    id: usize,
    operators: usize,
    lines: usize,
    column_group: CMatrix,
    self_block: CMatrix,
    received: CMatrix,
    settings: MudSettings,
    sigma2: f64,
    sigma_n2: f64,
    output: DfeOutput,
    /// `H_lk x̂_l` from each peer `l`, current round.
    remixed_in: BTreeMap<usize, CMatrix>,
}

impl IcMudNode {
    /// Initialize with a DFE on `H_kk` under noise `initial_noise`.
    pub fn new(
        id: usize,
        operators: usize,
        column_group: CMatrix,
        received: CMatrix,
        sigma2: f64,
        initial_noise: f64,
        settings: MudSettings,
    ) -> Result<Self> {
        let lines = column_group.ncols();
        if id >= operators || column_group.nrows() != operators * lines {
            return Err(Error::dims("column group rows", operators * lines, column_group.nrows()));
        }
        check_frame(&received, lines)?;
        let self_block = column_group.rows(id * lines, lines).into_owned();
        let output = no_coop_mud(&received, &self_block, initial_noise, &settings)?;
        Ok(Self {
            id,
            operators,
            lines,
            column_group,
            self_block,
            received,
            settings,
            sigma2,
            sigma_n2: initial_noise,
            output,
            remixed_in: BTreeMap::new(),
        })
    }

    pub fn output(&self) -> &DfeOutput {
        &self.output
    }

    pub fn sigma_n2(&self) -> f64 {
        self.sigma_n2
    }

    fn peers(&self) -> Vec<usize> {
        (0..self.operators).filter(|&m| m != self.id).collect()
    }

    fn alien_block(&self, to: usize) -> CMatrix {
        self.column_group.rows(to * self.lines, self.lines).into_owned()
    }
}

impl RoundNode for IcMudNode {
    fn id(&self) -> usize {
        self.id
    }

    fn emit(&mut self, round: usize, phase: usize) -> Result<Vec<InterferenceMessage>> {
        let peers = self.peers();
        match phase {
            0 => peers
                .into_iter()
                .map(|m| InterferenceMessage::remixed(round, self.id, m, &self.alien_block(m), &self.output.symbols))
                .collect(),
            1 => peers
                .into_iter()
                .map(|j| {
                    let others: Vec<&CMatrix> = self
                        .remixed_in
                        .iter()
                        .filter(|(&l, _)| l != j)
                        .map(|(_, p)| p)
                        .collect();
                    InterferenceMessage::mud_stripped(
                        round,
                        self.id,
                        j,
                        &self.received,
                        &self.self_block,
                        &self.output.symbols,
                        &others,
                    )
                })
                .collect(),
            _ => Err(Error::Protocol(format!("detection has no phase {phase}"))),
        }
    }

    fn absorb(&mut self, round: usize, phase: usize, inbox: Vec<InterferenceMessage>) -> Result<()> {
        let kind = if phase == 0 { MessageKind::MudRemixed } else { MessageKind::MudStripped };
        let inbox = Inbox::collect(self.id, round, phase, kind, self.peers(), inbox)?;
        if phase == 0 {
            self.remixed_in = inbox.into_payloads();
            return Ok(());
        }
        let (n, frames) = (self.lines, self.received.ncols());
        let mut z = CMatrix::zeros(self.operators * n, frames);
        let mut own = self.received.clone();
        for p in self.remixed_in.values() {
            own -= p;
        }
        z.rows_mut(self.id * n, n).copy_from(&own);
        for (m, stripped) in inbox.into_payloads() {
            if stripped.shape() != (n, frames) {
                return Err(Error::dims("stripped residual", format!("{n}x{frames}"), format!("{:?}", stripped.shape())));
            }
            z.rows_mut(m * n, n).copy_from(&stripped);
        }
        let (out, next) = ic_mud_round(&self.column_group, &z, self.sigma_n2, self.sigma2, Some(&self.output), &self.settings)?;
        self.output = out;
        self.sigma_n2 = next;
        Ok(())
    }
}

/// Run IC detection over the backhaul.
///
/// `column_groups[k]` is operator `k`'s channel knowledge `H_k`; `received`
/// is the stacked frame, sliced so that node `k` only sees `y_k`.
pub fn run_ic_mud(
    column_groups: &[CMatrix],
    received: &CMatrix,
    sigma2: f64,
    initial_noise: f64,
    settings: &MudSettings,
    rounds: usize,
    bus: &BusOptions,
) -> Result<MudRun> {
    let k = column_groups.len();
    let n = column_groups.first().map_or(0, CMatrix::ncols);
    check_frame(received, k * n)?;
    let mut nodes = column_groups
        .iter()
        .enumerate()
        .map(|(id, g)| {
            IcMudNode::new(id, k, g.clone(), received.rows(id * n, n).into_owned(), sigma2, initial_noise, *settings)
        })
        .collect::<Result<Vec<_>>>()?;
    let snap = |nodes: &[IcMudNode]| MudSnapshot::stack(nodes.iter().map(|x| (&x.output, x.sigma_n2)));
    let mut snapshots = vec![snap(&nodes)];
    let log = run_rounds(&mut nodes, Protocol::IcMud, rounds, bus, |_, nodes| {
        snapshots.push(snap(nodes));
        Ok(ControlFlow::Continue(()))
    })?;
    Ok(MudRun { snapshots, log: Some(log) })
}

/// One operator in DC detection. Holds its row group `[H_1k … H_Kk]`
/// (`N × KN`) and exchanges decoded symbols.
#[derive(Clone, Debug)]
pub struct DcMudNode {
    id: usize,
    operators: usize,
    lines: usize,
    row_group: CMatrix,
    self_block: CMatrix,
    received: CMatrix,
    settings: MudSettings,
    sigma2: f64,
    sigma_n2: f64,
    alien_power: f64,
    output: DfeOutput,
}

impl DcMudNode {
    pub fn new(
        id: usize,
        operators: usize,
        row_group: CMatrix,
        received: CMatrix,
        sigma2: f64,
        initial_noise: f64,
        settings: MudSettings,
    ) -> Result<Self> {
        let lines = row_group.nrows();
        if id >= operators || row_group.ncols() != operators * lines {
            return Err(Error::dims("row group columns", operators * lines, row_group.ncols()));
        }
        check_frame(&received, lines)?;
        let self_block = row_group.columns(id * lines, lines).into_owned();
        let alien_power = (frobenius_sq(&row_group) - frobenius_sq(&self_block)) / lines as f64;
        let output = no_coop_mud(&received, &self_block, initial_noise, &settings)?;
        Ok(Self {
            id,
            operators,
            lines,
            row_group,
            self_block,
            received,
            settings,
            sigma2,
            sigma_n2: initial_noise,
            alien_power,
            output,
        })
    }

    pub fn output(&self) -> &DfeOutput {
        &self.output
    }

    fn peers(&self) -> Vec<usize> {
        (0..self.operators).filter(|&m| m != self.id).collect()
    }
}

impl RoundNode for DcMudNode {
    fn id(&self) -> usize {
        self.id
    }

    fn emit(&mut self, round: usize, _phase: usize) -> Result<Vec<InterferenceMessage>> {
        self.peers()
            .into_iter()
            .map(|m| InterferenceMessage::dc_symbols(round, self.id, m, &self.output.symbols))
            .collect()
    }

    fn absorb(&mut self, round: usize, phase: usize, inbox: Vec<InterferenceMessage>) -> Result<()> {
        let inbox = Inbox::collect(self.id, round, phase, MessageKind::DcSymbols, self.peers(), inbox)?;
        // Peers are assumed to be as reliable as this node.
        let leftover = mean_posterior_variance(&self.output, &self.settings);
        self.sigma_n2 = self.sigma2 + leftover * self.alien_power;
        let mut z = self.received.clone();
        for (m, x) in inbox.into_payloads() {
            let block = self.row_group.columns(m * self.lines, self.lines);
            if x.nrows() != self.lines || x.ncols() != z.ncols() {
                return Err(Error::dims("peer symbols", self.lines, x.nrows()));
            }
            z -= block * x;
        }
        self.output = refine(&self.self_block, &z, self.sigma_n2, Some(&self.output), &self.settings)?;
        Ok(())
    }
}

/// Run DC detection over the backhaul.
pub fn run_dc_mud(
    row_groups: &[CMatrix],
    received: &CMatrix,
    sigma2: f64,
    initial_noise: f64,
    settings: &MudSettings,
    rounds: usize,
    bus: &BusOptions,
) -> Result<MudRun> {
    let k = row_groups.len();
    let n = row_groups.first().map_or(0, CMatrix::nrows);
    check_frame(received, k * n)?;
    let mut nodes = row_groups
        .iter()
        .enumerate()
        .map(|(id, g)| DcMudNode::new(id, k, g.clone(), received.rows(id * n, n).into_owned(), sigma2, initial_noise, *settings))
        .collect::<Result<Vec<_>>>()?;
    let snap = |nodes: &[DcMudNode]| MudSnapshot::stack(nodes.iter().map(|x| (&x.output, x.sigma_n2)));
    let mut snapshots = vec![snap(&nodes)];
    let log = run_rounds(&mut nodes, Protocol::DcMud, rounds, bus, |_, nodes| {
        snapshots.push(snap(nodes));
        Ok(ControlFlow::Continue(()))
    })?;
    Ok(MudRun { snapshots, log: Some(log) })
}

/// No cooperation, packaged like the iterative runs (one snapshot).
pub fn run_no_coop(
    channel: &MultiOperatorChannel,
    received: &CMatrix,
    noise: f64,
    settings: &MudSettings,
) -> Result<MudRun> {
    let (k, n) = (channel.operators(), channel.lines());
    check_frame(received, k * n)?;
    let outputs = (0..k)
        .map(|op| no_coop_mud(&received.rows(op * n, n).into_owned(), &channel.block(op, op), noise, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(MudRun { snapshots: vec![MudSnapshot::stack(outputs.iter().map(|o| (o, noise)))], log: None })
}

/// One row of a detection trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub iteration: usize,
    pub snr_d_db: f64,
    /// Symbol error rate of sliced decision variables.
    pub ser: f64,
    /// Mean over operators of the noise variance used next.
    pub sigma_n2: f64,
    pub msgs_sent: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionTrace {
    pub rows: Vec<DetectionRow>,
    /// Raw decision-error accumulators per iteration.
    pub power: Vec<DecisionPower>,
    pub symbol_errors: Vec<usize>,
}

impl DetectionTrace {
    pub fn from_run(run: &MudRun, truth: &CMatrix, constellation: Constellation) -> Result<Self> {
        let mut trace = Self::default();
        for (i, snap) in run.snapshots.iter().enumerate() {
            let power = DecisionPower::measure(&snap.decisions, truth)?;
            let errors = snap
                .decisions
                .iter()
                .zip(truth.iter())
                .filter(|(d, x)| constellation.slice(**d) != **x)
                .count();
            let msgs_sent = run
                .log
                .as_ref()
                .map_or(0, |l| l.messages.iter().filter(|m| m.round == i).count());
            let sigma_n2 = snap.sigma_n2.iter().sum::<f64>() / snap.sigma_n2.len().max(1) as f64;
            trace.rows.push(DetectionRow {
                iteration: i,
                snr_d_db: power.snr_db(),
                ser: errors as f64 / truth.len().max(1) as f64,
                sigma_n2,
                msgs_sent,
            });
            trace.power.push(power);
            trace.symbol_errors.push(errors);
        }
        Ok(trace)
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rng::{stream, Stream};
    use crate::model::{draw_symbols, synth_channel, transmit, ScenarioConfig};
    use crate::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn closed_forms() {
        assert_eq!(dc_loss(10, 2, 0.0), 1.0);
        assert!((dc_loss(10, 2, 1.0) - 2.0).abs() < 1e-12);
        assert!((dc_loss(1_000_000, 3, 0.5) - 3.0).abs() < 1e-4);
        assert!((init_variance_dc(10, 2, 0.5, 0.1) - 0.8).abs() < 1e-12);
        assert_eq!(init_variance_dc(10, 2, 0.0, 0.1), 0.1);
        assert!(init_variance_dc(10, 3, 0.5, 0.1) > init_variance_dc(10, 2, 0.5, 0.1));
    }

    #[test]
    fn zf_two_by_two() {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.5), c(0.0), c(1.0)]);
        let y = CMatrix::from_column_slice(2, 1, &[c(2.0), c(1.0)]);
        let out = zf_centralized(&y, &h, Constellation::Bpsk).unwrap();
        assert!((out.soft[(0, 0)] - c(1.5)).norm() < 1e-14);
        assert!((out.soft[(1, 0)] - c(1.0)).norm() < 1e-14);
        let singular = CMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(0.5), c(1.0)]);
        assert!(zf_centralized(&y, &singular, Constellation::Bpsk).is_err());
    }

    #[test]
    fn mmse_identity_is_scalar_wiener() {
        let y = CMatrix::from_fn(3, 2, |i, j| Complex64::new(i as f64 - 1.0, j as f64 * 0.5));
        let s2 = 0.25;
        let out = mmse_centralized(&y, &CMatrix::identity(3, 3), s2, Constellation::Qpsk, Decision::Hard).unwrap();
        assert!(crate::linalg::relative_difference(&out.biased, &(&y / c(1.0 + s2))) < 1e-12);
    }

    #[test]
    fn noiseless_schemes_recover_symbols() {
        let cfg = ScenarioConfig::new(2, 3, 8).with_alpha(0.3).with_noise_power(1e-3);
        let h = synth_channel(&cfg, &mut stream(1, Stream::Channel, 0)).unwrap();
        let x = draw_symbols(&cfg, 16, &mut stream(1, Stream::Symbols, 0)).unwrap();
        let y = transmit(&h, &x, 0.0, &mut stream(1, Stream::Noise, 0)).unwrap();
        let s = MudSettings::new(Constellation::Qpsk).with_decision(Decision::Hard);
        let groups: Vec<_> = (0..2).map(|k| h.column_group(k)).collect();
        let rows: Vec<_> = (0..2).map(|k| h.row_group(k)).collect();
        let noise = interference_noise(3, 2, 0.3, 1e-3);
        let ic = run_ic_mud(&groups, y.full(), 1e-3, noise, &s, 3, &BusOptions::default()).unwrap();
        assert_eq!(&ic.last().symbols, x.full());
        let dc = run_dc_mud(&rows, y.full(), 1e-3, noise, &s, 3, &BusOptions::default()).unwrap();
        assert_eq!(&dc.last().symbols, x.full());
        let cen = centralized_mud(&h, y.full(), 1e-3, &s, 2).unwrap();
        assert_eq!(&cen.last().symbols, x.full());
    }

    #[test]
    fn signaling_counts() {
        for (k, n) in [(2, 1), (2, 10), (3, 1), (3, 10)] {
            let cfg = ScenarioConfig::new(k, n, n + 1).with_alpha(0.2);
            let h = synth_channel(&cfg, &mut stream(2, Stream::Channel, 0)).unwrap();
            let x = draw_symbols(&cfg, 1, &mut stream(2, Stream::Symbols, 0)).unwrap();
            let y = transmit(&h, &x, 0.01, &mut stream(2, Stream::Noise, 0)).unwrap();
            let s = MudSettings::new(Constellation::Qpsk);
            let groups: Vec<_> = (0..k).map(|op| h.column_group(op)).collect();
            let rows: Vec<_> = (0..k).map(|op| h.row_group(op)).collect();
            let ic = run_ic_mud(&groups, y.full(), 0.01, 0.5, &s, 2, &BusOptions::default()).unwrap();
            let dc = run_dc_mud(&rows, y.full(), 0.01, 0.5, &s, 2, &BusOptions::default()).unwrap();
            for op in 0..k {
                for round in 1..=2 {
                    assert_eq!(ic.log.as_ref().unwrap().sent_scalars(round, op), 2 * (k - 1) * n);
                    assert_eq!(dc.log.as_ref().unwrap().sent_scalars(round, op), (k - 1) * n);
                }
            }
        }
    }

    #[test]
    fn sigma_update_floor_and_genie() {
        let h = CMatrix::identity(2, 2);
        let x = CMatrix::from_element(2, 3, c(1.0));
        assert_eq!(update_sigma_n(&x, &h, &x, 0.1).unwrap(), 1e-7);
    }
}
