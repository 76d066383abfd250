//! Neural-architecture-search environment over a tabulated reward oracle.
//!
//! A cell has six edges, each holding one of five operations. The state is
//! the edge vector plus a pointer to the edge the next action will edit;
//! the last pointer value marks the terminal state. After every edit the
//! pointer is redrawn uniformly, so episodes end with probability 1/7 per
//! step in the full space.
//!
//! The restricted space pins edge 0 to `zeroize` and only lets the agent
//! edit edges 1..=5; its pointer values `0..=4` address edges `1..=5` and
//! pointer 5 is terminal.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Environment, StateMap};

pub const NUM_EDGES: usize = 6;
pub const NUM_OPS: usize = 5;
pub const NUM_ARCHS: usize = 15_625;

pub const OP_ZEROIZE: u8 = 0;
pub const OP_SKIP_CONNECT: u8 = 1;
pub const OP_CONV_1X1: u8 = 2;
pub const OP_CONV_3X3: u8 = 3;
pub const OP_AVG_POOL_3X3: u8 = 4;

/// Starting cell: conv3x3 / avg-pool alternating.
pub const BASELINE_EDGES: [u8; NUM_EDGES] = [
    OP_CONV_3X3,
    OP_AVG_POOL_3X3,
    OP_CONV_3X3,
    OP_AVG_POOL_3X3,
    OP_CONV_3X3,
    OP_AVG_POOL_3X3,
];

#[derive(Debug, Error)]
pub enum NasError {
    #[error("edge value {0} outside 0..5")]
    EdgeValue(u8),
    #[error("architecture index {0} outside 0..15625")]
    ArchIndex(usize),
    #[error("cannot step terminal state")]
    TerminalStep,
    #[error("action {0} outside 0..5")]
    Action(usize),
    #[error("fidelity epoch {epoch} not present in reward table (epochs: {available:?})")]
    MissingEpoch { epoch: u32, available: Vec<u32> },
    #[error("reward table incomplete: {0}")]
    Incomplete(String),
    #[error("accuracy {value} for arch {arch} epoch {epoch} outside [0, 1]")]
    AccuracyRange { arch: usize, epoch: u32, value: f64 },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which search space a state lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NasSpace {
    Full,
    /// Edge 0 pinned to `zeroize`.
    Restricted,
}

impl NasSpace {
    pub fn terminal_pointer(self) -> u8 {
        match self {
            NasSpace::Full => 6,
            NasSpace::Restricted => 5,
        }
    }

    /// Edge edited when the pointer has value `pointer`.
    pub fn edited_edge(self, pointer: u8) -> usize {
        match self {
            NasSpace::Full => pointer as usize,
            NasSpace::Restricted => pointer as usize + 1,
        }
    }

    pub fn num_states(self) -> usize {
        match self {
            NasSpace::Full => NUM_ARCHS * 7,
            NasSpace::Restricted => 3125 * 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArchState {
    pub edges: [u8; NUM_EDGES],
    pub pointer: u8,
}

impl ArchState {
    pub fn is_terminal(&self, space: NasSpace) -> bool {
        self.pointer == space.terminal_pointer()
    }

    /// Dense index within `space`.
    pub fn index(&self, space: NasSpace) -> usize {
        match space {
            NasSpace::Full => arch_index_unchecked(&self.edges) * 7 + self.pointer as usize,
            NasSpace::Restricted => {
                let tail = self.edges[1..]
                    .iter()
                    .fold(0usize, |acc, &e| acc * NUM_OPS + e as usize);
                tail * 6 + self.pointer as usize
            }
        }
    }

    pub fn from_index(index: usize, space: NasSpace) -> Self {
        match space {
            NasSpace::Full => {
                let edges = decode_arch_unchecked(index / 7);
                Self { edges, pointer: (index % 7) as u8 }
            }
            NasSpace::Restricted => {
                let mut tail = index / 6;
                let mut edges = [OP_ZEROIZE; NUM_EDGES];
                for e in (1..NUM_EDGES).rev() {
                    edges[e] = (tail % NUM_OPS) as u8;
                    tail /= NUM_OPS;
                }
                Self { edges, pointer: (index % 6) as u8 }
            }
        }
    }
}

fn arch_index_unchecked(edges: &[u8; NUM_EDGES]) -> usize {
    edges.iter().fold(0usize, |acc, &e| acc * NUM_OPS + e as usize)
}

fn decode_arch_unchecked(mut index: usize) -> [u8; NUM_EDGES] {
    let mut edges = [0u8; NUM_EDGES];
    for e in (0..NUM_EDGES).rev() {
        edges[e] = (index % NUM_OPS) as u8;
        index /= NUM_OPS;
    }
    edges
}

/// Base-5 encoding of an edge vector, edge 0 most significant.
pub fn arch_index(edges: &[u8; NUM_EDGES]) -> Result<usize, NasError> {
    if let Some(&bad) = edges.iter().find(|&&e| e as usize >= NUM_OPS) {
        return Err(NasError::EdgeValue(bad));
    }
    Ok(arch_index_unchecked(edges))
}

pub fn decode_arch(index: usize) -> Result<[u8; NUM_EDGES], NasError> {
    if index >= NUM_ARCHS {
        return Err(NasError::ArchIndex(index));
    }
    Ok(decode_arch_unchecked(index))
}

/// Validation accuracy per architecture for a set of training epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    epochs: Vec<u32>,
    /// One column of `NUM_ARCHS` accuracies per entry of `epochs`.
    columns: Vec<Vec<f64>>,
}

impl RewardTable {
    pub fn new(epochs: Vec<u32>, columns: Vec<Vec<f64>>) -> Result<Self, NasError> {
        if epochs.len() != columns.len() || epochs.is_empty() {
            return Err(NasError::Incomplete("one column per epoch required".into()));
        }
        for (&epoch, col) in epochs.iter().zip(&columns) {
            if col.len() != NUM_ARCHS {
                return Err(NasError::Incomplete(format!(
                    "epoch {epoch} has {} architectures, expected {NUM_ARCHS}",
                    col.len()
                )));
            }
            if let Some((arch, &value)) =
                col.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(NasError::AccuracyRange { arch, epoch, value });
            }
        }
        let mut pairs: Vec<(u32, Vec<f64>)> = epochs.into_iter().zip(columns).collect();
        pairs.sort_by_key(|(e, _)| *e);
        let (epochs, columns) = pairs.into_iter().unzip();
        Ok(Self { epochs, columns })
    }

    pub fn epochs(&self) -> &[u32] {
        &self.epochs
    }

    pub fn num_epochs(&self) -> u32 {
        *self.epochs.last().expect("table has at least one epoch")
    }

    pub fn column(&self, epoch: u32) -> Option<&[f64]> {
        self.epochs
            .binary_search(&epoch)
            .ok()
            .map(|i| self.columns[i].as_slice())
    }

    pub fn accuracy(&self, arch: usize, epoch: u32) -> Option<f64> {
        self.column(epoch).map(|c| c[arch])
    }

    /// Writes the `arch_index,epoch,accuracy` CSV format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), NasError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["arch_index", "epoch", "accuracy"])?;
        for (epoch, col) in self.epochs.iter().zip(&self.columns) {
            for (arch, acc) in col.iter().enumerate() {
                w.serialize((arch, epoch, acc))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, NasError> {
        #[derive(Deserialize)]
        struct Row {
            arch_index: usize,
            epoch: u32,
            accuracy: f64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut by_epoch: BTreeMap<u32, Vec<Option<f64>>> = BTreeMap::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            if row.arch_index >= NUM_ARCHS {
                return Err(NasError::ArchIndex(row.arch_index));
            }
            by_epoch.entry(row.epoch).or_insert_with(|| vec![None; NUM_ARCHS])[row.arch_index] =
                Some(row.accuracy);
        }
        if by_epoch.is_empty() {
            return Err(NasError::Incomplete("no rows".into()));
        }
        let mut epochs = Vec::new();
        let mut columns = Vec::new();
        for (epoch, col) in by_epoch {
            let missing: Vec<usize> =
                col.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(i, _)| i).collect();
            if !missing.is_empty() {
                let preview: Vec<String> = missing.iter().take(5).map(|i| i.to_string()).collect();
                return Err(NasError::Incomplete(format!(
                    "epoch {epoch} is missing {} architectures (first: {})",
                    missing.len(),
                    preview.join(", ")
                )));
            }
            epochs.push(epoch);
            columns.push(col.into_iter().map(|v| v.expect("checked above")).collect());
        }
        Self::new(epochs, columns)
    }
}

pub fn load_reward_table(path: impl AsRef<Path>) -> Result<RewardTable, NasError> {
    let file = std::fs::File::open(path)?;
    RewardTable::read_csv(std::io::BufReader::new(file))
}

/// Synthetic accuracy curves for every architecture and epochs `1..=num_epochs`.
///
/// Each architecture gets an asymptote driven by per-(edge, op) quality
/// weights plus an idiosyncratic term, and a learning-rate constant `τ`:
/// `acc(e) = a · (1 − exp(−e / τ)) + N(0, 0.005²)`, clipped to `[0, 1]`.
pub fn synth_reward_table(seed: u64, num_epochs: u32) -> RewardTable {
    let mut rng = crate::rng::stream_rng(seed, 0);
    let op_means = [-1.2, 0.0, 0.4, 1.0, 0.1];
    let weight_noise = Normal::new(0.0, 0.4).expect("valid normal");
    let arch_noise = Normal::new(0.0, 0.3).expect("valid normal");
    let obs_noise = Normal::new(0.0, 0.005).expect("valid normal");
    let mut weights = [[0.0f64; NUM_OPS]; NUM_EDGES];
    for edge in weights.iter_mut() {
        for (op, w) in edge.iter_mut().enumerate() {
            *w = op_means[op] + weight_noise.sample(&mut rng);
        }
    }
    let params: Vec<(f64, f64)> = (0..NUM_ARCHS)
        .map(|arch| {
            let edges = decode_arch_unchecked(arch);
            let quality: f64 = edges
                .iter()
                .enumerate()
                .map(|(e, &op)| weights[e][op as usize])
                .sum::<f64>()
                / 2.0
                + arch_noise.sample(&mut rng);
            let asymptote = 0.1 + 0.85 / (1.0 + (-quality).exp());
            let tau = rng.random_range(5.0..15.0);
            (asymptote, tau)
        })
        .collect();
    let epochs: Vec<u32> = (1..=num_epochs).collect();
    let columns = epochs
        .iter()
        .map(|&epoch| {
            params
                .iter()
                .map(|&(a, tau)| {
                    let mean = a * (1.0 - (-(epoch as f64) / tau).exp());
                    (mean + obs_noise.sample(&mut rng)).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    RewardTable::new(epochs, columns).expect("synthetic table is complete")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NasEnvConfig {
    pub fidelity_epoch: u32,
    pub restricted: bool,
    pub discount: f64,
}

/// NAS environment indexed densely over its search space.
#[derive(Debug, Clone)]
pub struct NasEnv {
    space: NasSpace,
    discount: f64,
    /// Accuracy column for the configured fidelity epoch.
    accuracy: Vec<f64>,
}

impl NasEnv {
    pub fn new(table: &RewardTable, cfg: &NasEnvConfig) -> Result<Self, NasError> {
        let column = table.column(cfg.fidelity_epoch).ok_or_else(|| NasError::MissingEpoch {
            epoch: cfg.fidelity_epoch,
            available: table.epochs().to_vec(),
        })?;
        Ok(Self {
            space: if cfg.restricted { NasSpace::Restricted } else { NasSpace::Full },
            discount: cfg.discount,
            accuracy: column.to_vec(),
        })
    }

    pub fn space(&self) -> NasSpace {
        self.space
    }

    /// Edits the pointed-to edge and redraws the pointer.
    pub fn step_arch<R: Rng + ?Sized>(
        &self,
        state: ArchState,
        action: usize,
        rng: &mut R,
    ) -> Result<(ArchState, f64), NasError> {
        if state.is_terminal(self.space) {
            return Err(NasError::TerminalStep);
        }
        if action >= NUM_OPS {
            return Err(NasError::Action(action));
        }
        let edges = self.edited(&state, action);
        let pointer = rng.random_range(0..=self.space.terminal_pointer());
        Ok((ArchState { edges, pointer }, self.accuracy[arch_index_unchecked(&edges)]))
    }

    fn edited(&self, state: &ArchState, action: usize) -> [u8; NUM_EDGES] {
        let mut edges = state.edges;
        edges[self.space.edited_edge(state.pointer)] = action as u8;
        if self.space == NasSpace::Restricted {
            edges[0] = OP_ZEROIZE;
        }
        edges
    }

    /// Initial state: the baseline cell (mapped into the restricted space if
    /// needed) with a uniformly drawn non-terminal pointer.
    pub fn initial_arch<R: Rng + ?Sized>(&self, rng: &mut R) -> ArchState {
        let hi = nas_initial_state(rng);
        match self.space {
            NasSpace::Full => hi,
            NasSpace::Restricted => map_high_to_low(&hi),
        }
    }
}

impl Environment for NasEnv {
    fn num_states(&self) -> usize {
        self.space.num_states()
    }

    fn num_actions(&self) -> usize {
        NUM_OPS
    }

    fn is_terminal(&self, state: usize) -> bool {
        ArchState::from_index(state, self.space).is_terminal(self.space)
    }

    fn reward(&self, state: usize, action: usize) -> f64 {
        let s = ArchState::from_index(state, self.space);
        if s.is_terminal(self.space) {
            return 0.0;
        }
        self.accuracy[arch_index_unchecked(&self.edited(&s, action))]
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.initial_arch(rng).index(self.space)
    }

    fn next_state<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> usize {
        let s = ArchState::from_index(state, self.space);
        let (next, _) = self
            .step_arch(s, action, rng)
            .expect("rollouts never step terminal states");
        next.index(self.space)
    }
}

/// Baseline cell with pointer uniform over the editable edges `0..=5`.
pub fn nas_initial_state<R: Rng + ?Sized>(rng: &mut R) -> ArchState {
    ArchState { edges: BASELINE_EDGES, pointer: rng.random_range(0..6) }
}

/// High-to-low map of the restricted scenario: edge 0 becomes `zeroize`,
/// the pointer shifts down by one (pointer 0 stays 0) and the terminal
/// pointer maps to the restricted terminal.
pub fn map_high_to_low(state: &ArchState) -> ArchState {
    let mut edges = state.edges;
    edges[0] = OP_ZEROIZE;
    let pointer = match state.pointer {
        6 => 5,
        0 => 0,
        p => p - 1,
    };
    ArchState { edges, pointer }
}

/// Full [`StateMap`] for the restricted scenario.
pub fn nas_state_map() -> StateMap {
    let map = (0..NasSpace::Full.num_states())
        .map(|i| map_high_to_low(&ArchState::from_index(i, NasSpace::Full)).index(NasSpace::Restricted))
        .collect();
    StateMap::new(map, NasSpace::Restricted.num_states()).expect("restricted image is in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn linear_table() -> RewardTable {
        let col: Vec<f64> = (0..NUM_ARCHS).map(|i| i as f64 / 15_624.0).collect();
        RewardTable::new(vec![10, 200], vec![col.clone(), col]).unwrap()
    }

    #[test]
    fn index_extremes() {
        assert_eq!(arch_index(&[0; 6]).unwrap(), 0);
        assert_eq!(arch_index(&[4; 6]).unwrap(), 15_624);
        assert!(arch_index(&[5, 0, 0, 0, 0, 0]).is_err());
        assert!(decode_arch(15_625).is_err());
    }

    #[test]
    fn index_round_trip_is_exhaustive() {
        for i in 0..NUM_ARCHS {
            assert_eq!(arch_index(&decode_arch(i).unwrap()).unwrap(), i);
        }
    }

    #[test]
    fn step_edits_one_edge() {
        let env = NasEnv::new(
            &linear_table(),
            &NasEnvConfig { fidelity_epoch: 200, restricted: false, discount: 0.99 },
        )
        .unwrap();
        let s = ArchState { edges: [2, 3, 1, 0, 4, 2], pointer: 2 };
        let (next, _) = env.step_arch(s, 3, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(next.edges, [2, 3, 3, 0, 4, 2]);
    }

    #[test]
    fn max_architecture_has_reward_one() {
        let env = NasEnv::new(
            &linear_table(),
            &NasEnvConfig { fidelity_epoch: 200, restricted: false, discount: 0.99 },
        )
        .unwrap();
        let s = ArchState { edges: [4, 4, 4, 4, 4, 0], pointer: 5 };
        let (next, r) = env.step_arch(s, 4, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(next.edges, [4; 6]);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn terminal_state_yields_zero_and_refuses_step() {
        let env = NasEnv::new(
            &linear_table(),
            &NasEnvConfig { fidelity_epoch: 10, restricted: false, discount: 0.99 },
        )
        .unwrap();
        let term = ArchState { edges: [4; 6], pointer: 6 };
        for a in 0..NUM_OPS {
            assert_eq!(env.reward(term.index(NasSpace::Full), a), 0.0);
        }
        assert!(matches!(
            env.step_arch(term, 0, &mut stream_rng(0, 0)),
            Err(NasError::TerminalStep)
        ));
    }

    #[test]
    fn missing_epoch_is_rejected() {
        let err = NasEnv::new(
            &linear_table(),
            &NasEnvConfig { fidelity_epoch: 50, restricted: false, discount: 0.99 },
        )
        .unwrap_err();
        assert!(matches!(err, NasError::MissingEpoch { epoch: 50, .. }));
    }

    #[test]
    fn initial_states_use_baseline() {
        let mut rng = stream_rng(4, 0);
        let mut counts = [0usize; 7];
        let n = 10_000;
        for _ in 0..n {
            let s = nas_initial_state(&mut rng);
            assert_eq!(s.edges, BASELINE_EDGES);
            counts[s.pointer as usize] += 1;
        }
        assert_eq!(counts[6], 0);
        for &c in &counts[..6] {
            assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() < 0.02);
        }
    }

    #[test]
    fn mapping_example() {
        let hi = ArchState { edges: [2, 3, 1, 0, 4, 2], pointer: 3 };
        let lo = map_high_to_low(&hi);
        assert_eq!(lo.edges, [OP_ZEROIZE, 3, 1, 0, 4, 2]);
        assert_eq!(lo.pointer, 2);
        let term = map_high_to_low(&ArchState { edges: hi.edges, pointer: 6 });
        assert!(term.is_terminal(NasSpace::Restricted));
        let zero = map_high_to_low(&ArchState { edges: hi.edges, pointer: 0 });
        assert_eq!(zero.pointer, 0);
    }

    #[test]
    fn restricted_index_round_trip() {
        for i in (0..NasSpace::Restricted.num_states()).step_by(7) {
            let s = ArchState::from_index(i, NasSpace::Restricted);
            assert_eq!(s.edges[0], OP_ZEROIZE);
            assert_eq!(s.index(NasSpace::Restricted), i);
        }
    }

    #[test]
    fn synthetic_table_is_bounded_and_deterministic() {
        let a = synth_reward_table(3, 12);
        let b = synth_reward_table(3, 12);
        assert_eq!(a, b);
        assert_eq!(a.epochs().len(), 12);
        for &e in a.epochs() {
            assert!(a.column(e).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
