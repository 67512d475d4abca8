//! Histories: arrows between effective states, the probability of a branch
//! sequence, and bounded-depth enumeration of the history tree.

use rayon::prelude::*;

use crate::collapse::center_of_centralizer;
use crate::error::{EthError, Result};
use crate::evolve::{QuantumMarkovChain, TruncatedChainState, DEFAULT_ORACLE_CAP};
use crate::matcore::{DensityMatrix, Tolerances, UnitaryMatrix};

/// Default cumulative-probability threshold below which branches are pruned.
pub const DEFAULT_PRUNE: f64 = 1e-9;

/// Default maximum number of nodes in an enumerated tree.
pub const DEFAULT_NODE_CAP: usize = 200_000;

/// The atom state after `cursor` steps; the field part is the untouched
/// tail of the reference sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveState {
    pub atom: DensityMatrix,
    pub cursor: usize,
}

impl EffectiveState {
    pub fn new(atom: DensityMatrix, cursor: usize) -> Self {
        Self { atom, cursor }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arrow {
    /// Position in the actual event of the evolved state (descending
    /// eigenvalue order).
    pub branch: usize,
    pub rank: usize,
    pub probability: f64,
    pub successor: EffectiveState,
}

/// One arrow per sampleable branch of the actual event of the one-step
/// evolved state.
pub fn arrows_from(state: &EffectiveState, chain: &QuantumMarkovChain, tol: &Tolerances) -> Result<Vec<Arrow>> {
    let hat = chain.step(&state.atom, state.cursor, tol)?;
    let event = center_of_centralizer(&hat, tol)?;
    Ok((0..event.len())
        .map(|r| Arrow {
            branch: r,
            rank: event.projections()[r].rank(),
            probability: event.born_probabilities()[r],
            successor: EffectiveState::new(event.collapsed_state(r), state.cursor + 1),
        })
        .collect())
}

/// Product of conditional Born probabilities along `branches`.
pub fn history_probability(
    root: &EffectiveState,
    branches: &[usize],
    chain: &QuantumMarkovChain,
    tol: &Tolerances,
) -> Result<f64> {
    let mut state = root.clone();
    let mut prob = 1.0;
    for &b in branches {
        let mut arrows = arrows_from(&state, chain, tol)?;
        if b >= arrows.len() {
            return Err(EthError::IndexOutOfRange {
                what: "branch",
                index: b,
                bound: arrows.len(),
            });
        }
        let arrow = arrows.swap_remove(b);
        prob *= arrow.probability;
        state = arrow.successor;
    }
    Ok(prob)
}

/// `ω(H* H)` for the history operator of `branches`, evaluated on the
/// dense truncated chain. The event projections are taken from the
/// path computation, mapped into the interaction frame, and applied to the
/// full state together with the projection of the untouched field slots.
pub fn history_probability_oracle(
    root: &EffectiveState,
    branches: &[usize],
    chain: &QuantumMarkovChain,
    u: &UnitaryMatrix,
    cap: usize,
    tol: &Tolerances,
) -> Result<f64> {
    if root.cursor != 0 {
        return Err(EthError::InvalidParameter(
            "the dense oracle starts from cursor 0".into(),
        ));
    }
    let v = &chain.propagator;
    let slices = branches.len().max(1);
    let mut dense = TruncatedChainState::new(slices, &chain.field, &root.atom, cap)?;
    let mut state = root.clone();
    for (j, &b) in branches.iter().enumerate() {
        let hat = chain.step(&state.atom, state.cursor, tol)?;
        let event = center_of_centralizer(&hat, tol)?;
        if b >= event.len() {
            return Err(EthError::IndexOutOfRange {
                what: "branch",
                index: b,
                bound: event.len(),
            });
        }
        dense.apply_interaction(u, v, j)?;
        for slot in j + 1..slices {
            dense.project_field_slot(slot, chain.field.get(slot))?;
        }
        let vm = v.power(j + 1);
        let pi = event.projections()[b].matrix().conjugate_by(vm.dagger().matrix());
        dense.project_atom(&pi)?;
        state = EffectiveState::new(event.collapsed_state(b), state.cursor + 1);
    }
    Ok(dense.trace().re)
}

/// The oracle with the default dimension cap.
pub fn history_probability_dense(
    root: &EffectiveState,
    branches: &[usize],
    chain: &QuantumMarkovChain,
    u: &UnitaryMatrix,
    tol: &Tolerances,
) -> Result<f64> {
    history_probability_oracle(root, branches, chain, u, DEFAULT_ORACLE_CAP, tol)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryNode {
    pub parent: Option<usize>,
    pub depth: usize,
    /// Incoming branch label and its conditional probability.
    pub branch: Option<usize>,
    pub conditional: f64,
    pub cumulative: f64,
    pub state: EffectiveState,
    pub children: Vec<usize>,
    /// Mass of children dropped by pruning.
    pub pruned_child_mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryTree {
    pub depth: usize,
    pub nodes: Vec<HistoryNode>,
    /// Cumulative pruned mass at each depth `0..=depth`.
    pub pruned_mass: Vec<f64>,
    pub prune_below: f64,
}

impl HistoryTree {
    pub fn root(&self) -> &HistoryNode {
        &self.nodes[0]
    }

    pub fn nodes_at(&self, depth: usize) -> impl Iterator<Item = (usize, &HistoryNode)> {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.depth == depth)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &HistoryNode)> {
        self.nodes_at(self.depth)
    }

    /// Branch labels along the root path of node `idx`.
    pub fn path(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::new();
        while let Some(b) = self.nodes[idx].branch {
            out.push(b);
            idx = self.nodes[idx].parent.unwrap();
        }
        out.reverse();
        out
    }

    /// `|retained + pruned - 1|`, worst over depths.
    pub fn mass_defect(&self) -> f64 {
        (0..=self.depth)
            .map(|d| {
                let retained: f64 = self.nodes_at(d).map(|(_, n)| n.cumulative).sum();
                (retained + self.pruned_mass[d] - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Breadth-first expansion to `depth`. Children whose cumulative
/// probability falls below `prune_below` are dropped and their mass
/// recorded.
pub fn enumerate_tree(
    root: &EffectiveState,
    depth: usize,
    chain: &QuantumMarkovChain,
    prune_below: f64,
    node_cap: usize,
    tol: &Tolerances,
) -> Result<HistoryTree> {
    if prune_below.is_nan() || prune_below < 0.0 {
        return Err(EthError::InvalidParameter(format!(
            "prune threshold must be non-negative, got {prune_below}"
        )));
    }
    let mut nodes = vec![HistoryNode {
        parent: None,
        depth: 0,
        branch: None,
        conditional: 1.0,
        cumulative: 1.0,
        state: root.clone(),
        children: Vec::new(),
        pruned_child_mass: 0.0,
    }];
    let mut pruned_mass = vec![0.0; depth + 1];
    let mut frontier = vec![0usize];
    for d in 1..=depth {
        let expanded: Vec<Vec<Arrow>> = frontier
            .par_iter()
            .map(|&i| arrows_from(&nodes[i].state, chain, tol))
            .collect::<Result<_>>()?;
        pruned_mass[d] = pruned_mass[d - 1];
        let mut next = Vec::new();
        for (&parent, arrows) in frontier.iter().zip(expanded) {
            let base = nodes[parent].cumulative;
            for arrow in arrows {
                let cumulative = base * arrow.probability;
                if cumulative < prune_below {
                    nodes[parent].pruned_child_mass += cumulative;
                    pruned_mass[d] += cumulative;
                    continue;
                }
                if nodes.len() >= node_cap {
                    return Err(EthError::CapExceeded {
                        dim: nodes.len() + 1,
                        cap: node_cap,
                    });
                }
                let idx = nodes.len();
                nodes[parent].children.push(idx);
                nodes.push(HistoryNode {
                    parent: Some(parent),
                    depth: d,
                    branch: Some(arrow.branch),
                    conditional: arrow.probability,
                    cumulative,
                    state: arrow.successor,
                    children: Vec::new(),
                    pruned_child_mass: 0.0,
                });
                next.push(idx);
            }
        }
        frontier = next;
    }
    Ok(HistoryTree {
        depth,
        nodes,
        pruned_mass,
        prune_below,
    })
}

/// Largest `|Σ children + pruned children - node|` over internal nodes.
pub fn check_consistency(tree: &HistoryTree) -> f64 {
    tree.nodes
        .iter()
        .filter(|n| n.depth < tree.depth)
        .map(|n| {
            let children: f64 = n.children.iter().map(|&c| tree.nodes[c].cumulative).sum();
            (children + n.pruned_child_mass - n.cumulative).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::FieldSequence;
    use crate::kraus::kraus_from_unitary;
    use crate::matcore::random::{haar_unitary, random_density};
    use crate::matcore::ComplexMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn random_chain(seed: u64, n: usize, m: usize, horizon: usize) -> (QuantumMarkovChain, UnitaryMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = haar_unitary(n * m, &mut rng);
        let v = haar_unitary(m, &mut rng);
        let k = kraus_from_unitary(&u, n, m, &tol()).unwrap();
        (
            QuantumMarkovChain::new(k, v, FieldSequence::vacuum(n, horizon)).unwrap(),
            u,
        )
    }

    #[test]
    fn decoupled_pure_state_has_single_arrow() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let k = kraus_from_unitary(&UnitaryMatrix::identity(4), 2, 2, &tol()).unwrap();
        let chain = QuantumMarkovChain::new(k, haar_unitary(2, &mut rng), FieldSequence::vacuum(2, 5)).unwrap();
        let root = EffectiveState::new(DensityMatrix::basis_state(2, 0).unwrap(), 0);
        let arrows = arrows_from(&root, &chain, &tol()).unwrap();
        assert_eq!(arrows.len(), 1);
        assert!((arrows[0].probability - 1.0).abs() < 1e-12);
        assert_eq!(arrows[0].successor.cursor, 1);
    }

    #[test]
    fn diagonal_state_gives_two_arrows() {
        let k = kraus_from_unitary(&UnitaryMatrix::identity(4), 2, 2, &tol()).unwrap();
        let chain = QuantumMarkovChain::new(k, UnitaryMatrix::identity(2), FieldSequence::vacuum(2, 5)).unwrap();
        let rho = DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[0.6, 0.4]), &tol()).unwrap();
        let arrows = arrows_from(&EffectiveState::new(rho, 0), &chain, &tol()).unwrap();
        assert_eq!(arrows.len(), 2);
        assert!((arrows[0].probability - 0.6).abs() < 1e-14);
        assert!((arrows[1].probability - 0.4).abs() < 1e-14);
        assert!(arrows.iter().all(|a| a.rank == 1));
    }

    #[test]
    fn empty_history_has_probability_one() {
        let (chain, u) = random_chain(42, 2, 2, 4);
        let root = EffectiveState::new(random_density(2, &mut ChaCha8Rng::seed_from_u64(1)), 0);
        assert_eq!(history_probability(&root, &[], &chain, &tol()).unwrap(), 1.0);
        let dense = history_probability_dense(&root, &[], &chain, &u, &tol()).unwrap();
        assert!((dense - 1.0).abs() < 1e-12);
    }

    #[test]
    fn path_product_matches_dense_oracle_at_depth_two() {
        let (chain, u) = random_chain(43, 2, 2, 4);
        let root = EffectiveState::new(random_density(2, &mut ChaCha8Rng::seed_from_u64(2)), 0);
        for a in 0..2 {
            for b in 0..2 {
                let path = history_probability(&root, &[a, b], &chain, &tol()).unwrap();
                let dense = history_probability_dense(&root, &[a, b], &chain, &u, &tol()).unwrap();
                assert!((path - dense).abs() < 1e-9, "{a}{b}: {path} vs {dense}");
            }
        }
    }

    #[test]
    fn invalid_branch_is_rejected() {
        let (chain, _) = random_chain(44, 2, 2, 4);
        let root = EffectiveState::new(DensityMatrix::maximally_mixed(2), 0);
        assert!(matches!(
            history_probability(&root, &[5], &chain, &tol()),
            Err(EthError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn tree_masses_and_consistency() {
        let (chain, _) = random_chain(45, 2, 2, 5);
        let root = EffectiveState::new(DensityMatrix::maximally_mixed(2), 0);
        let tree = enumerate_tree(&root, 3, &chain, 0.0, 1000, &tol()).unwrap();
        assert!(tree.leaves().count() <= 8);
        assert!(tree.mass_defect() < 1e-10);
        assert!(check_consistency(&tree) < 1e-10);
        assert!(tree.pruned_mass.iter().all(|&p| p == 0.0));

        let mut broken = tree.clone();
        let leaf = broken.leaves().next().unwrap().0;
        broken.nodes[leaf].cumulative += 1e-3;
        assert!((check_consistency(&broken) - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn depth_zero_tree_is_trivially_consistent() {
        let (chain, _) = random_chain(46, 2, 2, 5);
        let root = EffectiveState::new(DensityMatrix::maximally_mixed(2), 0);
        let tree = enumerate_tree(&root, 0, &chain, DEFAULT_PRUNE, 10, &tol()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(check_consistency(&tree), 0.0);
    }

    #[test]
    fn node_cap_is_enforced() {
        let (chain, _) = random_chain(47, 2, 2, 5);
        let root = EffectiveState::new(DensityMatrix::maximally_mixed(2), 0);
        assert!(matches!(
            enumerate_tree(&root, 4, &chain, 0.0, 5, &tol()),
            Err(EthError::CapExceeded { .. })
        ));
    }

    #[test]
    fn pruning_keeps_mass_accounted() {
        let (chain, _) = random_chain(48, 2, 2, 6);
        let root = EffectiveState::new(DensityMatrix::maximally_mixed(2), 0);
        let tree = enumerate_tree(&root, 4, &chain, 0.05, 1000, &tol()).unwrap();
        assert!(tree.mass_defect() < 1e-10);
        assert!(check_consistency(&tree) < 1e-10);
    }
}
