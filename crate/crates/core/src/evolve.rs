//! The pre-collapse quantum Markov chain and its dense tensor oracle.
//!
//! Step `j` (0-based) consumes the field index `k_j`:
//!
//! ```text
//! Ω̂_{j+1} = Σ_α V L_α^{k_j} Ω_j (L_α^{k_j})* V*
//! ```
//!
//! The oracle never touches Kraus operators. It keeps the full density
//! matrix of a truncated field chain together with the atom, applies the
//! interaction unitaries slice by slice with the atom factor conjugated by
//! powers of `V`, and evaluates the Heisenberg-evolved observable directly.

use num_complex::Complex64;
use rand::RngCore;

use crate::error::{EthError, Result};
use crate::kraus::KrausFamily;
use crate::matcore::{ComplexMatrix, DensityMatrix, Tolerances, UnitaryMatrix};

/// Default cap on `N^slices * M` for the dense oracle.
pub const DEFAULT_ORACLE_CAP: usize = 4096;

/// Field indices `k_j` for time slots `j = 0..horizon`. Slots past the
/// explicit entries are vacuum (index 0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldSequence {
    field_dim: usize,
    entries: Vec<usize>,
    horizon: usize,
}

impl FieldSequence {
    pub fn vacuum(field_dim: usize, horizon: usize) -> Self {
        Self {
            field_dim,
            entries: Vec::new(),
            horizon,
        }
    }

    /// Explicit prefix `entries`, vacuum afterwards up to `horizon`.
    pub fn explicit(field_dim: usize, entries: Vec<usize>, horizon: usize) -> Result<Self> {
        if let Some(&bad) = entries.iter().find(|&&k| k >= field_dim) {
            return Err(EthError::IndexOutOfRange {
                what: "field sequence entry",
                index: bad,
                bound: field_dim,
            });
        }
        if entries.len() > horizon {
            return Err(EthError::InvalidParameter(format!(
                "{} explicit entries exceed the horizon {horizon}",
                entries.len()
            )));
        }
        Ok(Self {
            field_dim,
            entries,
            horizon,
        })
    }

    pub fn field_dim(&self) -> usize {
        self.field_dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `k_j`.
    pub fn get(&self, j: usize) -> usize {
        self.entries.get(j).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    /// `σ^n(k)`, i.e. `k'_j = k_{j+n}`.
    pub fn shifted(&self, n: usize) -> Self {
        Self {
            field_dim: self.field_dim,
            entries: self.entries.iter().skip(n).copied().collect(),
            horizon: self.horizon.saturating_sub(n),
        }
    }

    fn check_steps(&self, n: usize) -> Result<()> {
        if n > self.horizon {
            return Err(EthError::HorizonExceeded {
                requested: n,
                horizon: self.horizon,
            });
        }
        Ok(())
    }
}

/// A product observable `F_start ⊗ F_{start+1} ⊗ ...` on contiguous field
/// slots; identity elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceObservable {
    start: usize,
    factors: Vec<ComplexMatrix>,
}

impl SliceObservable {
    pub fn identity() -> Self {
        Self {
            start: 0,
            factors: Vec::new(),
        }
    }

    pub fn new(start: usize, factors: Vec<ComplexMatrix>, field_dim: usize) -> Result<Self> {
        if let Some(bad) = factors.iter().find(|f| f.rows() != field_dim || f.cols() != field_dim) {
            return Err(EthError::DimensionMismatch(format!(
                "slice factor {}x{} on a field of dimension {field_dim}",
                bad.rows(),
                bad.cols()
            )));
        }
        Ok(Self { start, factors })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// One past the last slot in the support (0 for the identity).
    pub fn end(&self) -> usize {
        if self.factors.is_empty() {
            0
        } else {
            self.start + self.factors.len()
        }
    }

    pub fn factors(&self) -> &[ComplexMatrix] {
        &self.factors
    }

    /// `<Φ_{σ^n(k)}, F Φ_{σ^n(k)}>`.
    pub fn field_expectation(&self, field: &FieldSequence, n: usize) -> Complex64 {
        self.factors
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let k = field.get(self.start + j + n);
                f.get(k, k)
            })
            .product()
    }
}

/// Ω̂_n from Ω_{n-1} and the consumed field index `k`.
pub fn step_pre_collapse(
    omega: &DensityMatrix,
    k: usize,
    kraus: &KrausFamily,
    v: &UnitaryMatrix,
    tol: &Tolerances,
) -> Result<DensityMatrix> {
    kraus.apply_single(k, v, omega, tol)
}

/// `n`-fold composition of [`step_pre_collapse`] along `field`.
pub fn chain_pre_collapse(
    omega0: &DensityMatrix,
    field: &FieldSequence,
    kraus: &KrausFamily,
    v: &UnitaryMatrix,
    n: usize,
    tol: &Tolerances,
) -> Result<DensityMatrix> {
    field.check_steps(n)?;
    (0..n).try_fold(omega0.clone(), |omega, j| {
        step_pre_collapse(&omega, field.get(j), kraus, v, tol)
    })
}

/// `ω(Γ^{-n} (F ⊗ C) Γ^n)` through the Kraus chain: the field factor is
/// evaluated on the shifted basis state and the atom factor on the chain.
#[allow(clippy::too_many_arguments)]
pub fn heisenberg_expectation(
    f: &SliceObservable,
    c: &ComplexMatrix,
    omega0: &DensityMatrix,
    field: &FieldSequence,
    kraus: &KrausFamily,
    v: &UnitaryMatrix,
    n: usize,
    tol: &Tolerances,
) -> Result<Complex64> {
    let atom = chain_pre_collapse(omega0, field, kraus, v, n, tol)?;
    Ok(f.field_expectation(field, n) * atom.expectation(c))
}

/// The data of a deterministic repeated-interaction chain.
#[derive(Clone, Debug)]
pub struct QuantumMarkovChain {
    pub kraus: KrausFamily,
    pub propagator: UnitaryMatrix,
    pub field: FieldSequence,
}

impl QuantumMarkovChain {
    pub fn new(kraus: KrausFamily, propagator: UnitaryMatrix, field: FieldSequence) -> Result<Self> {
        if propagator.dim() != kraus.atom_dim() {
            return Err(EthError::DimensionMismatch(format!(
                "propagator of dimension {} for an atom of dimension {}",
                propagator.dim(),
                kraus.atom_dim()
            )));
        }
        if field.field_dim() != kraus.field_dim() {
            return Err(EthError::DimensionMismatch(format!(
                "field sequence over C^{} for Kraus operators over C^{}",
                field.field_dim(),
                kraus.field_dim()
            )));
        }
        Ok(Self {
            kraus,
            propagator,
            field,
        })
    }

    /// Ω̂_{step+1} from Ω_step.
    pub fn step(&self, omega: &DensityMatrix, step: usize, tol: &Tolerances) -> Result<DensityMatrix> {
        self.field.check_steps(step + 1)?;
        step_pre_collapse(omega, self.field.get(step), &self.kraus, &self.propagator, tol)
    }
}

/// One pre-collapse step of some dynamics: deterministic chains, or chains
/// whose field slice is itself sampled.
pub trait PreCollapseDynamics: Sync {
    fn atom_dim(&self) -> usize;

    /// Maximum number of steps, if bounded.
    fn horizon(&self) -> Option<usize>;

    /// Evolves the post-collapse state at time `step` to the pre-collapse
    /// state at `step + 1`. Returns the field index consumed.
    fn advance(
        &self,
        omega: &DensityMatrix,
        step: usize,
        rng: &mut dyn RngCore,
        tol: &Tolerances,
    ) -> Result<(usize, DensityMatrix)>;
}

impl PreCollapseDynamics for QuantumMarkovChain {
    fn atom_dim(&self) -> usize {
        self.kraus.atom_dim()
    }

    fn horizon(&self) -> Option<usize> {
        Some(self.field.horizon())
    }

    fn advance(
        &self,
        omega: &DensityMatrix,
        step: usize,
        _rng: &mut dyn RngCore,
        tol: &Tolerances,
    ) -> Result<(usize, DensityMatrix)> {
        Ok((self.field.get(step), self.step(omega, step, tol)?))
    }
}

/// Full density matrix of `slices` field slots and the atom, ordered
/// `(s_0, s_1, ..., s_{slices-1}, atom)` with slot 0 most significant.
#[derive(Clone, Debug)]
pub struct TruncatedChainState {
    slices: usize,
    field_dim: usize,
    atom_dim: usize,
    rho: ComplexMatrix,
}

impl TruncatedChainState {
    /// `|Φ_k><Φ_k| ⊗ Ω_0` restricted to the first `slices` slots.
    pub fn new(slices: usize, field: &FieldSequence, omega0: &DensityMatrix, cap: usize) -> Result<Self> {
        let n = field.field_dim();
        let m = omega0.dim();
        let dim = chain_dimension(n, slices, m)
            .filter(|&d| d <= cap)
            .ok_or(EthError::CapExceeded {
                dim: chain_dimension(n, slices, m).unwrap_or(usize::MAX),
                cap,
            })?;
        let mut field_index = 0usize;
        for j in 0..slices {
            field_index = field_index * n + field.get(j);
        }
        let offset = field_index * m;
        let rho = ComplexMatrix::from_fn(dim, dim, |a, b| {
            if a >= offset && a < offset + m && b >= offset && b < offset + m {
                omega0.matrix().get(a - offset, b - offset)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Ok(Self {
            slices,
            field_dim: n,
            atom_dim: m,
            rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.rho.rows()
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn density(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    fn slot_stride(&self, slot: usize) -> usize {
        self.field_dim.pow((self.slices - 1 - slot) as u32) * self.atom_dim
    }

    /// `X ρ` for `X` acting on `slot ⊗ atom` (an `(N M) x (N M)` matrix in
    /// field-first order), identity elsewhere.
    fn left_slot_atom(&self, slot: usize, op: &ComplexMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
        let (n, m, d) = (self.field_dim, self.atom_dim, self.dim());
        let stride = self.slot_stride(slot);
        let mut out = vec![Complex64::new(0.0, 0.0); d * d];
        for x in 0..d {
            let s = (x / stride) % n;
            let i = x % m;
            let base = x - s * stride - i;
            let out_row = &mut out[x * d..(x + 1) * d];
            for t in 0..n {
                for j in 0..m {
                    let coeff = op.get(s * m + i, t * m + j);
                    if coeff == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let src = rho.row(base + t * stride + j);
                    for (o, r) in out_row.iter_mut().zip(src) {
                        *o += coeff * r;
                    }
                }
            }
        }
        ComplexMatrix::from_raw(d, d, out)
    }

    /// `A X*` for `X` on `slot ⊗ atom`.
    fn right_slot_atom_dagger(&self, slot: usize, op: &ComplexMatrix, a: &ComplexMatrix) -> ComplexMatrix {
        let (n, m, d) = (self.field_dim, self.atom_dim, self.dim());
        let stride = self.slot_stride(slot);
        // column y of the result mixes columns base(y) + t·stride + j
        let mut taps: Vec<Vec<(usize, Complex64)>> = Vec::with_capacity(d);
        for y in 0..d {
            let s = (y / stride) % n;
            let i = y % m;
            let base = y - s * stride - i;
            let mut row = Vec::with_capacity(n * m);
            for t in 0..n {
                for j in 0..m {
                    let coeff = op.get(s * m + i, t * m + j).conj();
                    if coeff != Complex64::new(0.0, 0.0) {
                        row.push((base + t * stride + j, coeff));
                    }
                }
            }
            taps.push(row);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); d * d];
        for (x, out_row) in out.chunks_mut(d).enumerate() {
            let src = a.row(x);
            for (o, tap) in out_row.iter_mut().zip(&taps) {
                *o = tap.iter().map(|&(z, c)| src[z] * c).sum();
            }
        }
        ComplexMatrix::from_raw(d, d, out)
    }

    /// `X ρ X*` with `X` on `slot ⊗ atom`.
    fn conjugate_slot_atom(&mut self, slot: usize, op: &ComplexMatrix) {
        let half = self.left_slot_atom(slot, op, &self.rho);
        self.rho = self.right_slot_atom_dagger(slot, op, &half);
    }

    fn check_slot(&self, slot: usize) -> Result<()> {
        if slot >= self.slices {
            return Err(EthError::IndexOutOfRange {
                what: "chain slot",
                index: slot,
                bound: self.slices,
            });
        }
        Ok(())
    }

    /// Applies `U_{slot+1} = Γ_0^{-slot} U_1 Γ_0^{slot}`: the interaction
    /// unitary on `slot ⊗ atom` with its atom factor conjugated by `V^slot`.
    pub fn apply_interaction(&mut self, u: &UnitaryMatrix, v: &UnitaryMatrix, slot: usize) -> Result<()> {
        self.check_slot(slot)?;
        let vk = v.power(slot);
        let dressing = UnitaryMatrix::identity(self.field_dim).kron(&vk)?;
        let uk = dressing.dagger().matrix().matmul(u.matrix()).matmul(dressing.matrix());
        self.conjugate_slot_atom(slot, &uk);
        Ok(())
    }

    /// Projects (without renormalising) onto `|φ_k><φ_k|` in `slot`.
    pub fn project_field_slot(&mut self, slot: usize, k: usize) -> Result<()> {
        self.check_slot(slot)?;
        let p = ComplexMatrix::basis_projector(self.field_dim, k).kron(&ComplexMatrix::identity(self.atom_dim))?;
        self.conjugate_slot_atom(slot, &p);
        Ok(())
    }

    /// Projects (without renormalising) with an atom operator `p`.
    pub fn project_atom(&mut self, p: &ComplexMatrix) -> Result<()> {
        let op = ComplexMatrix::identity(self.field_dim).kron(p)?;
        self.conjugate_slot_atom(0, &op);
        Ok(())
    }

    /// `tr(ρ (F_shifted ⊗ C))` where `F`'s factor `j` sits on slot
    /// `F.start + j + shift`.
    pub fn expectation(&self, f: &SliceObservable, shift: usize, c: &ComplexMatrix) -> Result<Complex64> {
        let (n, m, d) = (self.field_dim, self.atom_dim, self.dim());
        let mut slots = Vec::with_capacity(f.factors().len());
        for j in 0..f.factors().len() {
            let slot = f.start() + j + shift;
            self.check_slot(slot)?;
            slots.push(self.slot_stride(slot));
        }
        // Only the diagonal of (F ⊗ C) ρ is needed: for each row x, sum over
        // the column digits the local factors may change.
        let local = n.pow(slots.len() as u32);
        let mut acc = Complex64::new(0.0, 0.0);
        for x in 0..d {
            let i = x % m;
            for combo in 0..local {
                let mut coeff = Complex64::new(1.0, 0.0);
                let mut y = x - i;
                let mut rest = combo;
                for (factor, &stride) in f.factors().iter().zip(&slots) {
                    let t = rest % n;
                    rest /= n;
                    let s = (x / stride) % n;
                    coeff *= factor.get(s, t);
                    y = y - s * stride + t * stride;
                }
                if coeff == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..m {
                    acc += coeff * c.get(i, j) * self.rho.get(y + j, x);
                }
            }
        }
        Ok(acc)
    }
}

fn chain_dimension(field_dim: usize, slices: usize, atom_dim: usize) -> Option<usize> {
    field_dim.checked_pow(slices as u32)?.checked_mul(atom_dim)
}

/// `ω(Γ^{-n} (F ⊗ C) Γ^n)` by dense algebra on a truncated chain, with
/// `Γ^n = Γ_0^n U_n ... U_1`. Independent of the Kraus path.
#[allow(clippy::too_many_arguments)]
pub fn tensor_oracle_expectation(
    f: &SliceObservable,
    c: &ComplexMatrix,
    omega0: &DensityMatrix,
    field: &FieldSequence,
    u: &UnitaryMatrix,
    v: &UnitaryMatrix,
    n: usize,
    cap: usize,
) -> Result<Complex64> {
    let nf = field.field_dim();
    let m = omega0.dim();
    if u.dim() != nf * m || v.dim() != m || c.rows() != m || c.cols() != m {
        return Err(EthError::DimensionMismatch(format!(
            "oracle inputs: U {}, V {}, C {}x{}, field {nf}, atom {m}",
            u.dim(),
            v.dim(),
            c.rows(),
            c.cols()
        )));
    }
    field.check_steps(n)?;
    let slices = (n + f.end()).max(1);
    let mut state = TruncatedChainState::new(slices, field, omega0, cap)?;
    for slot in 0..n {
        state.apply_interaction(u, v, slot)?;
    }
    let vn = v.power(n);
    let c_heis = c.conjugate_by(vn.dagger().matrix());
    state.expectation(f, n, &c_heis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kraus::kraus_from_unitary;
    use crate::matcore::random::{haar_unitary, random_density, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn zero_steps_leaves_state_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = haar_unitary(4, &mut rng);
        let k = kraus_from_unitary(&u, 2, 2, &tol()).unwrap();
        let rho = random_density(2, &mut rng);
        let field = FieldSequence::vacuum(2, 5);
        let out = chain_pre_collapse(&rho, &field, &k, &UnitaryMatrix::identity(2), 0, &tol()).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn decoupled_chain_is_free_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = kraus_from_unitary(&UnitaryMatrix::identity(6), 2, 3, &tol()).unwrap();
        let v = haar_unitary(3, &mut rng);
        let rho = random_density(3, &mut rng);
        let field = FieldSequence::vacuum(2, 10);
        let out = chain_pre_collapse(&rho, &field, &k, &v, 7, &tol()).unwrap();
        let want = rho.conjugate_by(&v.power(7));
        assert!(out.matrix().max_abs_diff(want.matrix()) < 1e-13);
    }

    #[test]
    fn horizon_is_enforced() {
        let k = kraus_from_unitary(&UnitaryMatrix::identity(4), 2, 2, &tol()).unwrap();
        let field = FieldSequence::vacuum(2, 2);
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(
            chain_pre_collapse(&rho, &field, &k, &UnitaryMatrix::identity(2), 3, &tol()),
            Err(EthError::HorizonExceeded {
                requested: 3,
                horizon: 2
            })
        ));
    }

    #[test]
    fn explicit_sequence_validation_and_shift() {
        assert!(FieldSequence::explicit(2, vec![0, 2], 5).is_err());
        let f = FieldSequence::explicit(3, vec![1, 2, 0, 1], 6).unwrap();
        let s = f.shifted(2);
        assert_eq!((s.get(0), s.get(1), s.get(2), s.get(5)), (0, 1, 0, 0));
        assert_eq!(s.horizon(), 4);
    }

    #[test]
    fn normalization_and_basis_vector_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = haar_unitary(4, &mut rng);
        let v = haar_unitary(2, &mut rng);
        let k = kraus_from_unitary(&u, 2, 2, &tol()).unwrap();
        let rho = random_density(2, &mut rng);
        let field = FieldSequence::vacuum(2, 4);
        let one = heisenberg_expectation(
            &SliceObservable::identity(),
            &ComplexMatrix::identity(2),
            &rho,
            &field,
            &k,
            &v,
            3,
            &tol(),
        )
        .unwrap();
        assert!((one - Complex64::new(1.0, 0.0)).norm() < 1e-13);

        let d = ComplexMatrix::from_real_diagonal(&[0.25, -3.0]);
        let f = SliceObservable::new(0, vec![d], 2).unwrap();
        let c = random_hermitian(2, &mut rng);
        let got = heisenberg_expectation(&f, &c, &rho, &field, &k, &v, 1, &tol()).unwrap();
        let hat = chain_pre_collapse(&rho, &field, &k, &v, 1, &tol()).unwrap();
        let want = hat.expectation(&c) * 0.25;
        assert!((got - want).norm() < 1e-14);
    }

    #[test]
    fn oracle_with_trivial_interaction_shifts_and_conjugates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = haar_unitary(2, &mut rng);
        let rho = random_density(2, &mut rng);
        let field = FieldSequence::explicit(2, vec![0, 1, 1], 5).unwrap();
        let f = SliceObservable::new(0, vec![ComplexMatrix::from_real_diagonal(&[2.0, 5.0])], 2).unwrap();
        let c = random_hermitian(2, &mut rng);
        let got = tensor_oracle_expectation(
            &f,
            &c,
            &rho,
            &field,
            &UnitaryMatrix::identity(4),
            &v,
            2,
            DEFAULT_ORACLE_CAP,
        )
        .unwrap();
        // F lands on slot 2 where k_2 = 1; C is conjugated by V^2.
        let want = rho.conjugate_by(&v.power(2)).expectation(&c) * 5.0;
        assert!((got - want).norm() < 1e-13);
    }

    #[test]
    fn oracle_cap_is_enforced() {
        let field = FieldSequence::vacuum(3, 10);
        let rho = DensityMatrix::maximally_mixed(3);
        let err = tensor_oracle_expectation(
            &SliceObservable::identity(),
            &ComplexMatrix::identity(3),
            &rho,
            &field,
            &UnitaryMatrix::identity(9),
            &UnitaryMatrix::identity(3),
            8,
            DEFAULT_ORACLE_CAP,
        );
        assert!(matches!(err, Err(EthError::CapExceeded { .. })));
    }
}
