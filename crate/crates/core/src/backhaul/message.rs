use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::training::OperatorTraining;
use crate::{CMatrix, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// Estimation phase 1: `Y_m − H_mm X̄_m − Σ_{p≠m,k} H_pm X̄_p`.
    EstResidual,
    /// Estimation phase 2: `H_km X̄_k`.
    EstReencoded,
    /// Detection: `y_m − Σ_{l≠k} H_lm x_l`.
    MudStripped,
    /// Detection: `H_mk x_m`.
    MudRemixed,
    /// Data-cooperation baseline: decoded symbols `x_m`.
    DcSymbols,
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::EstResidual,
        MessageKind::EstReencoded,
        MessageKind::MudStripped,
        MessageKind::MudRemixed,
        MessageKind::DcSymbols,
    ];

    pub fn code(self) -> u32 {
        match self {
            MessageKind::EstResidual => 1,
            MessageKind::EstReencoded => 2,
            MessageKind::MudStripped => 3,
            MessageKind::MudRemixed => 4,
            MessageKind::DcSymbols => 5,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        MessageKind::ALL.into_iter().find(|k| k.code() == code)
    }
}

/// How a payload was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Product of a channel block with the sender's training or symbols.
    ChannelProduct,
    /// Received signal with the contributions of known users removed.
    StrippedResidual,
    /// Sender's own symbol estimates, unmixed (data cooperation only).
    RawSymbols,
    /// Built from an arbitrary matrix (decoded from the wire, or injected).
    Unverified,
}

/// One payload on the backhaul.
#[derive(Clone, Debug, PartialEq)]
pub struct InterferenceMessage {
    round: usize,
    phase: usize,
    sender: usize,
    receiver: usize,
    kind: MessageKind,
    payload: CMatrix,
    provenance: Provenance,
}

impl InterferenceMessage {
    fn build(
        round: usize,
        sender: usize,
        receiver: usize,
        kind: MessageKind,
        payload: CMatrix,
        provenance: Provenance,
    ) -> Result<Self> {
        if sender == receiver {
            return Err(Error::Protocol(format!("operator {sender} addressed a message to itself")));
        }
        Ok(Self { round, phase: 0, sender, receiver, kind, payload, provenance })
    }

    /// `H_km X̄_k`: an alien channel block re-encoded with the sender's training.
    pub fn reencoded(
        round: usize,
        sender: usize,
        receiver: usize,
        channel_block: &CMatrix,
        training: &OperatorTraining,
    ) -> Result<Self> {
        if channel_block.ncols() != training.block().nrows() {
            return Err(Error::dims("re-encoded block columns", training.block().nrows(), channel_block.ncols()));
        }
        let payload = training.encode(channel_block);
        Self::build(round, sender, receiver, MessageKind::EstReencoded, payload, Provenance::ChannelProduct)
    }

    /// `Y_m − H_mm X̄_m − Σ aliens`, the training residual forwarded to one peer.
    pub fn est_residual(
        round: usize,
        sender: usize,
        receiver: usize,
        received: &CMatrix,
        self_block: &CMatrix,
        training: &OperatorTraining,
        alien_reencodings: &[&CMatrix],
    ) -> Result<Self> {
        let mut payload = received - training.encode(self_block);
        subtract_all(&mut payload, alien_reencodings)?;
        Self::build(round, sender, receiver, MessageKind::EstResidual, payload, Provenance::StrippedResidual)
    }

    /// `H_mk x_m`: own symbol estimates mixed by an alien channel block.
    pub fn remixed(
        round: usize,
        sender: usize,
        receiver: usize,
        channel_block: &CMatrix,
        symbols: &CMatrix,
    ) -> Result<Self> {
        if channel_block.ncols() != symbols.nrows() {
            return Err(Error::dims("remixed block columns", symbols.nrows(), channel_block.ncols()));
        }
        let payload = channel_block * symbols;
        Self::build(round, sender, receiver, MessageKind::MudRemixed, payload, Provenance::ChannelProduct)
    }

    /// `y_k − H_kk x_k − Σ_{l≠k,m} H_lk x_l`, forwarded to peer `m`.
    pub fn mud_stripped(
        round: usize,
        sender: usize,
        receiver: usize,
        received: &CMatrix,
        self_block: &CMatrix,
        symbols: &CMatrix,
        alien_remixes: &[&CMatrix],
    ) -> Result<Self> {
        if self_block.ncols() != symbols.nrows() || self_block.nrows() != received.nrows() {
            return Err(Error::dims("stripped self block", received.nrows(), self_block.nrows()));
        }
        let mut payload = received - self_block * symbols;
        subtract_all(&mut payload, alien_remixes)?;
        Self::build(round, sender, receiver, MessageKind::MudStripped, payload, Provenance::StrippedResidual)
    }

    /// Decoded symbols shared verbatim (data cooperation).
    pub fn dc_symbols(round: usize, sender: usize, receiver: usize, symbols: &CMatrix) -> Result<Self> {
        Self::build(round, sender, receiver, MessageKind::DcSymbols, symbols.clone(), Provenance::RawSymbols)
    }

    /// Arbitrary payload, tagged [`Provenance::Unverified`].
    pub fn unverified(
        round: usize,
        sender: usize,
        receiver: usize,
        kind: MessageKind,
        payload: CMatrix,
    ) -> Result<Self> {
        Self::build(round, sender, receiver, kind, payload, Provenance::Unverified)
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Phase stamp assigned by the bus at send time.
    pub fn phase(&self) -> usize {
        self.phase
    }

    pub(crate) fn stamp_phase(&mut self, phase: usize) {
        self.phase = phase;
    }

    pub fn sender(&self) -> usize {
        self.sender
    }

    pub fn receiver(&self) -> usize {
        self.receiver
    }

    pub fn kind(&self) -> MessageKind {
        self.kind
    }

    pub fn payload(&self) -> &CMatrix {
        &self.payload
    }

    pub fn into_payload(self) -> CMatrix {
        self.payload
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn complex_scalars(&self) -> usize {
        self.payload.len()
    }

    /// Bytes on the wire for the payload: two 64-bit reals per entry.
    pub fn byte_size(&self) -> usize {
        16 * self.payload.len()
    }
}

fn subtract_all(acc: &mut CMatrix, terms: &[&CMatrix]) -> Result<()> {
    for t in terms {
        if t.shape() != acc.shape() {
            return Err(Error::dims("subtracted term", format!("{:?}", acc.shape()), format!("{:?}", t.shape())));
        }
        *acc -= *t;
    }
    Ok(())
}

/// Inbox of one node for one phase, keyed by sender.
#[derive(Debug, Default)]
pub struct Inbox {
    by_sender: BTreeMap<usize, InterferenceMessage>,
}

impl Inbox {
    /// Check stamps and kinds, and that every expected peer delivered exactly
    /// one message.
    pub fn collect(
        node: usize,
        round: usize,
        phase: usize,
        kind: MessageKind,
        peers: impl IntoIterator<Item = usize>,
        messages: Vec<InterferenceMessage>,
    ) -> Result<Self> {
        let mut by_sender = BTreeMap::new();
        for msg in messages {
            if msg.receiver != node {
                return Err(Error::Protocol(format!(
                    "operator {node} received a message addressed to {}",
                    msg.receiver
                )));
            }
            if msg.round != round || msg.phase != phase {
                return Err(Error::Protocol(format!(
                    "operator {node} in round {round} phase {phase} got a message stamped round {} phase {}",
                    msg.round, msg.phase
                )));
            }
            if msg.kind != kind {
                return Err(Error::Protocol(format!(
                    "operator {node} expected {kind:?} but got {:?}",
                    msg.kind
                )));
            }
            if by_sender.insert(msg.sender, msg).is_some() {
                return Err(Error::Protocol(format!("duplicate message to operator {node}")));
            }
        }
        for peer in peers {
            if !by_sender.contains_key(&peer) {
                return Err(Error::MissingInbound { round, phase, node, from: peer });
            }
        }
        Ok(Self { by_sender })
    }

    pub fn take(&mut self, sender: usize) -> Option<CMatrix> {
        self.by_sender.remove(&sender).map(InterferenceMessage::into_payload)
    }

    pub fn into_payloads(self) -> BTreeMap<usize, CMatrix> {
        self.by_sender
            .into_iter()
            .map(|(s, m)| (s, m.into_payload()))
            .collect()
    }
}
