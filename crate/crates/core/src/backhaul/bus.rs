use std::fmt;
use std::fs;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::message::{InterferenceMessage, MessageKind, Provenance};
use super::wire;
use crate::model::rng::{stream, Stream};
use crate::{CMatrix, Error, Result};

/// Which exchange pattern a run follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// IC channel estimation: residuals, then re-encoded alien blocks.
    IcEst,
    /// IC detection: remixed symbols, then stripped residuals.
    IcMud,
    /// Data cooperation: decoded symbols only.
    DcMud,
}

impl Protocol {
    pub fn phase_kinds(self) -> &'static [MessageKind] {
        match self {
            Protocol::IcEst => &[MessageKind::EstResidual, MessageKind::EstReencoded],
            Protocol::IcMud => &[MessageKind::MudRemixed, MessageKind::MudStripped],
            Protocol::DcMud => &[MessageKind::DcSymbols],
        }
    }

    pub fn phases(self) -> usize {
        self.phase_kinds().len()
    }
}

/// One operator in a synchronous-round protocol.
///
/// The bus calls, for every round and every phase, `emit` on all nodes, then
/// delivers the whole phase, then calls `absorb` on all nodes.
pub trait RoundNode: Send {
    fn id(&self) -> usize;

    /// Messages sent by this node in `(round, phase)`.
    fn emit(&mut self, round: usize, phase: usize) -> Result<Vec<InterferenceMessage>>;

    /// All messages of `(round, phase)` addressed to this node, sorted by sender.
    fn absorb(&mut self, round: usize, phase: usize, inbox: Vec<InterferenceMessage>) -> Result<()>;
}

/// Drop one message to exercise the abort path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DropFault {
    pub round: usize,
    pub phase: usize,
    pub sender: usize,
    pub receiver: usize,
}

#[derive(Clone, Debug, Default)]
pub struct BusOptions {
    /// Run node computations of a phase on the rayon pool.
    pub parallel: bool,
    /// Keep payload copies in the log (needed by `leak_check` and dumps).
    pub retain_payloads: bool,
    pub fault: Option<DropFault>,
    /// Shuffle each inbox with this seed before delivery.
    pub shuffle_seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LoggedMessage {
    pub id: usize,
    pub round: usize,
    pub phase: usize,
    pub sender: usize,
    pub receiver: usize,
    pub kind: MessageKind,
    pub rows: usize,
    pub cols: usize,
    pub byte_size: usize,
    pub provenance: Provenance,
    #[serde(skip)]
    pub payload: Option<CMatrix>,
}

impl LoggedMessage {
    pub fn complex_scalars(&self) -> usize {
        self.rows * self.cols
    }
}

/// Everything that crossed the backhaul during a run.
#[derive(Clone, Debug, Serialize)]
pub struct RoundLog {
    pub protocol: Protocol,
    pub operators: usize,
    pub rounds_completed: usize,
    pub messages: Vec<LoggedMessage>,
}

impl RoundLog {
    fn new(protocol: Protocol, operators: usize) -> Self {
        Self { protocol, operators, rounds_completed: 0, messages: Vec::new() }
    }

    /// Complex scalars sent by `op` during `round`.
    pub fn sent_scalars(&self, round: usize, op: usize) -> usize {
        self.messages
            .iter()
            .filter(|m| m.round == round && m.sender == op)
            .map(LoggedMessage::complex_scalars)
            .sum()
    }

    /// Complex scalars sent per symbol time (payload rows), independent of
    /// the frame length.
    pub fn sent_scalars_per_column(&self, round: usize, op: usize) -> usize {
        self.messages.iter().filter(|m| m.round == round && m.sender == op).map(|m| m.rows).sum()
    }

    pub fn received_scalars(&self, round: usize, op: usize) -> usize {
        self.messages
            .iter()
            .filter(|m| m.round == round && m.receiver == op)
            .map(LoggedMessage::complex_scalars)
            .sum()
    }

    /// Cumulative signaling tally of one operator over the run.
    pub fn total_sent_scalars(&self, op: usize) -> usize {
        self.messages
            .iter()
            .filter(|m| m.sender == op)
            .map(LoggedMessage::complex_scalars)
            .sum()
    }

    pub fn messages_in(&self, round: usize, phase: usize) -> impl Iterator<Item = &LoggedMessage> {
        self.messages
            .iter()
            .filter(move |m| m.round == round && m.phase == phase)
    }

    pub fn total_bytes(&self) -> usize {
        self.messages.iter().map(|m| m.byte_size).sum()
    }

    /// Per-message metadata as JSON (payloads are never included).
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.into()))
    }

    /// Write every retained payload to `dir/msg_<id>.bin` in the wire format.
    pub fn dump_payloads(&self, dir: &Path) -> Result<usize> {
        fs::create_dir_all(dir)?;
        let mut written = 0;
        for m in &self.messages {
            let Some(p) = &m.payload else { continue };
            let msg = InterferenceMessage::unverified(m.round, m.sender, m.receiver, m.kind, p.clone())?;
            let bytes = wire::encode(&msg).map_err(|e| Error::Protocol(e.to_string()))?;
            let mut f = fs::File::create(dir.join(format!("msg_{:06}.bin", m.id)))?;
            f.write_all(&bytes)?;
            written += 1;
        }
        Ok(written)
    }
}

/// A run that stopped early; `log` holds everything delivered so far.
#[derive(Debug)]
pub struct BusAbort {
    pub log: RoundLog,
    pub error: Error,
}

impl fmt::Display for BusAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "backhaul run aborted after {} rounds: {}",
            self.log.rounds_completed, self.error
        )
    }
}

impl std::error::Error for BusAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<BusAbort> for Error {
    fn from(a: BusAbort) -> Self {
        a.error
    }
}

/// Run `rounds` synchronous rounds of `protocol` over `nodes`.
///
/// `nodes[k]` must have id `k`. After each completed round `on_round` sees
/// the node states (read-only) and decides whether to keep going.
pub fn run_rounds<N, F>(
    nodes: &mut [N],
    protocol: Protocol,
    rounds: usize,
    options: &BusOptions,
    mut on_round: F,
) -> std::result::Result<RoundLog, BusAbort>
where
    N: RoundNode,
    F: FnMut(usize, &[N]) -> Result<ControlFlow<()>>,
{
    let k = nodes.len();
    let mut log = RoundLog::new(protocol, k);
    if let Some(bad) = nodes.iter().enumerate().find(|(i, n)| n.id() != *i) {
        let error = Error::Protocol(format!("node at slot {} reports id {}", bad.0, bad.1.id()));
        return Err(BusAbort { log, error });
    }
    for round in 1..=rounds {
        for (phase, &kind) in protocol.phase_kinds().iter().enumerate() {
            if let Err(error) = run_phase(nodes, round, phase, kind, options, &mut log) {
                return Err(BusAbort { log, error });
            }
        }
        log.rounds_completed = round;
        match on_round(round, nodes) {
            Ok(ControlFlow::Continue(())) => {}
            Ok(ControlFlow::Break(())) => break,
            Err(error) => return Err(BusAbort { log, error }),
        }
    }
    Ok(log)
}

fn run_phase<N: RoundNode>(
    nodes: &mut [N],
    round: usize,
    phase: usize,
    kind: MessageKind,
    options: &BusOptions,
    log: &mut RoundLog,
) -> Result<()> {
    let k = nodes.len();
    // Emit: every node computes its outbound messages for this phase.
    let outbound: Vec<Result<Vec<InterferenceMessage>>> = if options.parallel {
        nodes.par_iter_mut().map(|n| n.emit(round, phase)).collect()
    } else {
        nodes.iter_mut().map(|n| n.emit(round, phase)).collect()
    };
    let mut inboxes: Vec<Vec<InterferenceMessage>> = (0..k).map(|_| Vec::new()).collect();
    for (sender, msgs) in outbound.into_iter().enumerate() {
        for mut msg in msgs? {
            if msg.sender() != sender {
                return Err(Error::Protocol(format!(
                    "operator {sender} tried to send as operator {}",
                    msg.sender()
                )));
            }
            if msg.receiver() >= k {
                return Err(Error::Protocol(format!("no operator {}", msg.receiver())));
            }
            if msg.round() != round {
                return Err(Error::Protocol(format!(
                    "operator {sender} stamped round {} during round {round}",
                    msg.round()
                )));
            }
            if msg.kind() != kind {
                return Err(Error::Protocol(format!(
                    "operator {sender} sent {:?} in a {kind:?} phase",
                    msg.kind()
                )));
            }
            msg.stamp_phase(phase);
            let dropped = options.fault.is_some_and(|f| {
                f.round == round && f.phase == phase && f.sender == sender && f.receiver == msg.receiver()
            });
            if dropped {
                continue;
            }
            log.messages.push(LoggedMessage {
                id: log.messages.len(),
                round,
                phase,
                sender,
                receiver: msg.receiver(),
                kind,
                rows: msg.payload().nrows(),
                cols: msg.payload().ncols(),
                byte_size: msg.byte_size(),
                provenance: msg.provenance(),
                payload: options.retain_payloads.then(|| msg.payload().clone()),
            });
            inboxes[msg.receiver()].push(msg);
        }
    }
    for (receiver, inbox) in inboxes.iter_mut().enumerate() {
        inbox.sort_by_key(InterferenceMessage::sender);
        if let Some(seed) = options.shuffle_seed {
            let trial = ((round as u64) << 32) ^ ((phase as u64) << 16) ^ receiver as u64;
            inbox.shuffle(&mut stream(seed, Stream::Aux(0xB05), trial));
        }
    }
    // Absorb: deliver the whole phase, then let every node process it.
    let mut slots: Vec<Option<Vec<InterferenceMessage>>> = inboxes.into_iter().map(Some).collect();
    let paired: Vec<(&mut N, Vec<InterferenceMessage>)> = nodes
        .iter_mut()
        .zip(slots.iter_mut())
        .map(|(n, s)| (n, s.take().unwrap_or_default()))
        .collect();
    if options.parallel {
        paired
            .into_par_iter()
            .try_for_each(|(n, inbox)| n.absorb(round, phase, inbox))
    } else {
        paired
            .into_iter()
            .try_for_each(|(n, inbox)| n.absorb(round, phase, inbox))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backhaul::Inbox;
    use crate::Complex64;

    /// Toy data-cooperation node: sums what it hears.
    struct Echo {
        id: usize,
        k: usize,
        value: Complex64,
        heard: Vec<(usize, usize)>,
    }

    impl RoundNode for Echo {
        fn id(&self) -> usize {
            self.id
        }

        fn emit(&mut self, round: usize, _phase: usize) -> Result<Vec<InterferenceMessage>> {
            let x = CMatrix::from_element(1, 1, self.value);
            (0..self.k)
                .filter(|&m| m != self.id)
                .map(|m| InterferenceMessage::dc_symbols(round, self.id, m, &x))
                .collect()
        }

        fn absorb(&mut self, round: usize, phase: usize, inbox: Vec<InterferenceMessage>) -> Result<()> {
            let peers = (0..self.k).filter(|&m| m != self.id);
            let inbox = Inbox::collect(self.id, round, phase, MessageKind::DcSymbols, peers, inbox)?;
            for (s, p) in inbox.into_payloads() {
                self.value += p[(0, 0)] * 0.5;
                self.heard.push((round, s));
            }
            Ok(())
        }
    }

    fn nodes(k: usize) -> Vec<Echo> {
        (0..k)
            .map(|id| Echo { id, k, value: Complex64::new(id as f64, 0.0), heard: Vec::new() })
            .collect()
    }

    #[test]
    fn zero_rounds_send_nothing() {
        let mut n = nodes(3);
        let log = run_rounds(&mut n, Protocol::DcMud, 0, &BusOptions::default(), |_, _| Ok(ControlFlow::Continue(()))).unwrap();
        assert!(log.messages.is_empty());
        assert_eq!(n[2].value, Complex64::new(2.0, 0.0));
    }

    #[test]
    fn dropped_message_aborts_with_partial_log() {
        let mut n = nodes(3);
        let opts = BusOptions {
            fault: Some(DropFault { round: 2, phase: 0, sender: 0, receiver: 2 }),
            ..Default::default()
        };
        let abort = run_rounds(&mut n, Protocol::DcMud, 4, &opts, |_, _| Ok(ControlFlow::Continue(()))).unwrap_err();
        assert!(matches!(abort.error, Error::MissingInbound { round: 2, node: 2, from: 0, .. }));
        assert_eq!(abort.log.rounds_completed, 1);
        assert_eq!(abort.log.messages.len(), 6 + 5);
    }

    #[test]
    fn delivery_order_and_threads_do_not_matter() {
        let mut a = nodes(4);
        let mut b = nodes(4);
        let la = run_rounds(&mut a, Protocol::DcMud, 3, &BusOptions::default(), |_, _| Ok(ControlFlow::Continue(()))).unwrap();
        let opts = BusOptions { parallel: true, shuffle_seed: Some(9), ..Default::default() };
        let lb = run_rounds(&mut b, Protocol::DcMud, 3, &opts, |_, _| Ok(ControlFlow::Continue(()))).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.value, y.value);
        }
        assert_eq!(la.to_json().unwrap(), lb.to_json().unwrap());
    }

    #[test]
    fn json_has_no_payloads() {
        let mut n = nodes(2);
        let opts = BusOptions { retain_payloads: true, ..Default::default() };
        let log = run_rounds(&mut n, Protocol::DcMud, 1, &opts, |_, _| Ok(ControlFlow::Continue(()))).unwrap();
        let json = log.to_json().unwrap();
        assert!(json.contains("\"dc_symbols\""));
        assert!(!json.contains("payload"));
        let dir = std::env::temp_dir().join(format!("icvec-dump-{}", std::process::id()));
        assert_eq!(log.dump_payloads(&dir).unwrap(), 2);
        let bytes = std::fs::read(dir.join("msg_000000.bin")).unwrap();
        assert_eq!(wire::decode(&bytes).unwrap().payload(), log.messages[0].payload.as_ref().unwrap());
        std::fs::remove_dir_all(dir).ok();
    }
}
