//! The `tree.json` document: enumerated histories with their probabilities.

use std::path::Path;

use ethsim_core::histories::{check_consistency, enumerate_tree, EffectiveState, HistoryTree, DEFAULT_NODE_CAP};
use ethsim_core::matcore::DensityMatrix;
use ethsim_core::EthError;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::build::build;
use crate::error::{during_run, HarnessError, Result};
use crate::scenario::Scenario;

/// Largest per-node consistency violation `tree` accepts.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// 1-based branch label among the parent's arrows.
    pub branch: Option<usize>,
    pub conditional: f64,
    pub cumulative: f64,
    /// Next field slot to be consumed.
    pub field_cursor: usize,
    /// SHA-256 of the atom state rounded to 12 significant digits.
    pub fingerprint: String,
    pub children: Vec<usize>,
    pub pruned_child_mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TreeExport {
    pub scenario: String,
    pub depth: usize,
    pub prune_below: f64,
    /// Cumulative mass lost to pruning at each depth.
    pub pruned_mass: Vec<f64>,
    pub mass_defect: f64,
    pub consistency_violation: f64,
    pub nodes: Vec<TreeNode>,
}

/// Hash of a state that is stable under last-digit rounding noise.
pub fn fingerprint(rho: &DensityMatrix) -> String {
    let mut h = Sha256::new();
    let m = rho.matrix();
    h.update(format!("{}x{};", m.rows(), m.cols()));
    for z in m.data() {
        // entries at rounding-noise level, including -0, hash as 0
        let re = if z.re.abs() < 1e-13 { 0.0 } else { z.re };
        let im = if z.im.abs() < 1e-13 { 0.0 } else { z.im };
        h.update(format!("{re:.11e},{im:.11e};"));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn export(s: &Scenario, tree: &HistoryTree) -> TreeExport {
    let nodes = tree
        .nodes
        .iter()
        .enumerate()
        .map(|(id, n)| TreeNode {
            id,
            parent: n.parent,
            depth: n.depth,
            branch: n.branch.map(|b| b + 1),
            conditional: n.conditional,
            cumulative: n.cumulative,
            field_cursor: n.state.cursor,
            fingerprint: fingerprint(&n.state.atom),
            children: n.children.clone(),
            pruned_child_mass: n.pruned_child_mass,
        })
        .collect();
    TreeExport {
        scenario: s.name.clone(),
        depth: tree.depth,
        prune_below: tree.prune_below,
        pruned_mass: tree.pruned_mass.clone(),
        mass_defect: tree.mass_defect(),
        consistency_violation: check_consistency(tree),
        nodes,
    }
}

/// Enumerates the history tree of a fixed-field scenario to `depth` and
/// writes `tree.json` into `out`.
pub fn run_tree(s: &Scenario, depth: usize, prune: f64, out: &Path) -> Result<TreeExport> {
    if !(0.0..1.0).contains(&prune) {
        return Err(EthError::InvalidParameter(format!("prune threshold must lie in [0, 1), got {prune}")).into());
    }
    let built = build(s, depth)?;
    let chain = built.dynamics.chain().ok_or_else(|| {
        HarnessError::Core(EthError::InvalidParameter(
            "history trees need a fixed field sequence, not a thermal one".into(),
        ))
    })?;
    let root = EffectiveState::new(built.initial.clone(), 0);
    let tree = enumerate_tree(&root, depth, chain, prune, DEFAULT_NODE_CAP, &built.tol).map_err(during_run)?;
    let doc = export(s, &tree);
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let path = out.join("tree.json");
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    if doc.consistency_violation > CONSISTENCY_TOLERANCE {
        return Err(HarnessError::CheckFailed {
            check: "history consistency",
            detail: format!(
                "violation {:.3e} exceeds {CONSISTENCY_TOLERANCE:.0e}",
                doc.consistency_violation
            ),
        });
    }
    Ok(doc)
}
