//! Iterated avoidance engine. Starting from the full unit ball at scale
//! λ_0, the engine works through a queue of (function, derivative order,
//! section tuple) items. Each stage restricts the current family to its
//! tuple's regions, runs a single-scale avoidance step at a finer scale,
//! splices the selected sub-families back into the level, and appends new
//! queue work over the refined family. The surviving set is held as a
//! compressed chunk family throughout, so the untouched part of the tree
//! never explodes into explicit ball lists, and every stage leaves a
//! certificate that can be re-verified against any later level.

pub mod audit;
pub mod chunks;
pub mod queue;
pub mod serialize;
pub mod verify;

use crate::error::Error;
use crate::field::{Ball, BallFamily, Char, Element, Field};
use crate::poly::{self, IntPolynomial};
use crate::smooth::{self, SmoothCertificate, SmoothFn, SmoothOptions};
use crate::Result;
use chunks::Chunk;
use queue::{BlockInfo, QueueItem};

/// A registered target function: tuples of the surviving set must keep a
/// certified distance from its zero locus.
#[derive(Debug)]
pub struct FunctionEntry {
    name: String,
    kind: FunctionKind,
    n: usize,
    v: usize,
}

#[derive(Debug)]
pub enum FunctionKind {
    /// Integer polynomial with its privileged derivative chain:
    /// chain[k+1] = ∂chain[k]/∂coords[k], ending in a nonzero constant.
    Polynomial {
        chain: Vec<IntPolynomial>,
        coords: Vec<usize>,
    },
    /// Vector-valued map with a claimed nonvanishing minor.
    Smooth(SmoothFn),
}

impl FunctionEntry {
    /// Register a polynomial, deriving its chain: at each step the first
    /// flat coordinate with a not-identically-zero partial derivative is
    /// differentiated, until a constant remains. The constant must not
    /// vanish to working precision.
    pub fn polynomial(name: &str, f: IntPolynomial) -> Result<FunctionEntry> {
        let field = f.field().clone();
        let (n, v) = (f.n(), f.v());
        let mut chain = vec![f];
        let mut coords = Vec::new();
        while chain.last().expect("nonempty").constant_value().is_none() {
            let last = chain.last().expect("nonempty");
            let next = (0..n * v).find_map(|c| {
                let d = last.partial_derivative(c);
                if d.terms().is_empty() {
                    None
                } else {
                    Some((c, d))
                }
            });
            match next {
                Some((c, d)) => {
                    coords.push(c);
                    chain.push(d);
                }
                None => {
                    return Err(Error::Infeasible(format!(
                        "every first partial of {name} vanishes identically; \
                         no derivative chain reaches a constant"
                    )));
                }
            }
        }
        let top = chain.last().expect("nonempty").constant_value().expect("loop exit");
        if field.valuation(&top).finite().is_none() {
            return Err(Error::Infeasible(format!(
                "the derivative chain of {name} ends in a constant that \
                 vanishes to working precision"
            )));
        }
        Ok(FunctionEntry {
            name: name.into(),
            kind: FunctionKind::Polynomial { chain, coords },
            n,
            v,
        })
    }

    /// Register a vector-valued map; its own minor/derivative constants
    /// were validated at construction.
    pub fn smooth(name: &str, f: SmoothFn) -> FunctionEntry {
        let (n, v) = (f.n(), f.v());
        FunctionEntry { name: name.into(), kind: FunctionKind::Smooth(f), n, v }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &FunctionKind {
        &self.kind
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of derivative orders the queue schedules for this function.
    pub fn order_count(&self) -> u32 {
        match &self.kind {
            FunctionKind::Polynomial { chain, .. } => (chain.len() - 1) as u32,
            FunctionKind::Smooth(_) => 1,
        }
    }

    fn field(&self) -> &Field {
        match &self.kind {
            FunctionKind::Polynomial { chain, .. } => chain[0].field(),
            FunctionKind::Smooth(f) => f.field(),
        }
    }
}

/// Per-stage scale parameters: regions are read at μ, the step works
/// through ν-balls, the selected families live at λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSchedule {
    pub mu: u32,
    pub nu: u32,
    pub lambda: u32,
}

/// What one stage certified.
#[derive(Debug, Clone)]
pub enum CertKind {
    /// Some region held no surviving balls: nothing to avoid, level
    /// unchanged.
    Vacuous,
    /// Polynomial step: val of the avoided derivative is ≤ lower_bound_exp
    /// on all tuples from the selected families; a_exp is the certified
    /// bound on the next derivative that the step consumed.
    Polynomial {
        a_exp: u32,
        lower_bound_exp: u32,
        delta_val: u32,
        constant_path: bool,
    },
    /// Smooth step with its full certificate.
    Smooth { certificate: SmoothCertificate },
}

/// The complete record of one processed queue item.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub item: QueueItem,
    pub schedule: StageSchedule,
    pub kind: CertKind,
    /// The σ-balls, at the radius of the level they index into.
    pub regions: Vec<Ball>,
    /// Selected per-slot families as chunks at scale λ.
    pub s_chunks: Vec<Vec<Chunk>>,
    /// Whether λ_j < ν_j(1/D + ε_j) − n·μ_j held (n/D for the smooth
    /// case, D its minor-dimension ratio). The asymptotic schedule needs
    /// this eventually; at desk scales it is logged, never asserted.
    pub feasible: bool,
}

impl StageRecord {
    /// The valuation bound the stage certifies over its families.
    pub fn lower_bound_exp(&self) -> Option<u32> {
        match &self.kind {
            CertKind::Vacuous => None,
            CertKind::Polynomial { lower_bound_exp, .. } => Some(*lower_bound_exp),
            CertKind::Smooth { certificate } => Some(certificate.lower_bound_exp),
        }
    }
}

/// One level of the construction: the surviving family at scale λ as
/// disjoint, key-sorted chunks.
#[derive(Debug, Clone)]
pub struct Level {
    pub lambda: u32,
    pub chunks: Vec<Chunk>,
}

impl Level {
    pub fn leaf_count(&self) -> Result<u128> {
        chunks::total_count(&self.chunks)
    }

    /// The idx-th leaf ball in canonical order.
    pub fn ball_at(&self, idx: u128) -> Result<Ball> {
        chunks::unrank_in(&self.chunks, idx)
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Initial scale: E_0 is the full unit ball as q^{-λ_0}-balls.
    pub lambda0: u32,
    /// ν_j is the smallest multiple of e at least μ_j + nu_gap.
    pub nu_gap: u32,
    pub smooth_opts: SmoothOptions,
}

impl Default for EngineConfig {
    fn default() -> EngineConfig {
        EngineConfig { lambda0: 1, nu_gap: 2, smooth_opts: SmoothOptions::default() }
    }
}

/// The construction state: levels E_0 ⊇ E_1 ⊇ …, processed-stage records,
/// and the queue's block summaries.
pub struct Engine {
    field: Field,
    functions: Vec<FunctionEntry>,
    config: EngineConfig,
    levels: Vec<Level>,
    stages: Vec<StageRecord>,
    blocks: Vec<BlockInfo>,
}

impl Engine {
    /// Initialize level 0 and the first queue block.
    pub fn new(field: &Field, functions: Vec<FunctionEntry>, config: EngineConfig) -> Result<Engine> {
        if functions.is_empty() {
            return Err(Error::Infeasible("no functions registered".into()));
        }
        let n = functions[0].n();
        for f in &functions {
            if !f.field().compatible(field) {
                return Err(Error::Infeasible(format!(
                    "function {} was built over a different field",
                    f.name()
                )));
            }
            if f.n() != n {
                return Err(Error::Infeasible(
                    "all functions must share the per-slot dimension".into(),
                ));
            }
        }
        if config.lambda0 == 0 || config.lambda0 >= field.precision() {
            return Err(Error::Infeasible(format!(
                "initial scale λ_0 = {} must be positive and below precision {}",
                config.lambda0,
                field.precision()
            )));
        }
        let e0 = Chunk::full_unit(field, n, config.lambda0);
        let m0 = e0.count()?;
        // The first function must find strictly more balls than its arity,
        // so that a section leaves room for the complement.
        if m0 <= functions[0].v() as u128 {
            return Err(Error::Infeasible(format!(
                "λ_0 = {} yields {m0} balls, not more than the first \
                 function's {} slots",
                config.lambda0,
                functions[0].v()
            )));
        }
        let specs = queue_specs(&functions);
        let blocks = vec![queue::make_block(0, m0, &specs)];
        let lambda0 = config.lambda0;
        Ok(Engine {
            field: field.clone(),
            functions,
            config,
            levels: vec![Level { lambda: lambda0, chunks: vec![e0] }],
            stages: Vec::new(),
            blocks,
        })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn functions(&self) -> &[FunctionEntry] {
        &self.functions
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    /// The current level (deepest refinement so far).
    pub fn current(&self) -> &Level {
        self.levels.last().expect("level 0 always exists")
    }

    /// Process the next queue item as one stage. On success the new level,
    /// stage record, and queue block are appended atomically.
    pub fn process_next(&mut self) -> Result<&StageRecord> {
        let j = self.stages.len() + 1;
        let item = queue::item_at(&self.blocks, self.stages.len() as u64)?;
        let cur = self.current().clone();
        let mu = cur.lambda;
        let source = &self.levels[item.j0];
        let regions: Vec<Ball> = item
            .sigma
            .iter()
            .map(|&s| chunks::unrank_in(&source.chunks, s))
            .collect::<Result<_>>()?;
        let t: Vec<Vec<Chunk>> = regions
            .iter()
            .map(|b| chunks::restrict_all(&cur.chunks, b))
            .collect();
        let func = &self.functions[item.ell - 1];
        debug_assert_eq!(regions.len(), func.v());

        if t.iter().any(Vec::is_empty) {
            // Empty slot: no tuples exist, nothing to avoid. The level is
            // carried unchanged so the stage indexing stays aligned.
            let record = StageRecord {
                item,
                schedule: StageSchedule { mu, nu: mu, lambda: mu },
                kind: CertKind::Vacuous,
                regions,
                s_chunks: Vec::new(),
                feasible: true,
            };
            return self.finish_stage(j, cur, record);
        }

        // ν_j: the smallest multiple of e at distance at least nu_gap.
        let e = match self.field.characteristic() {
            Char::Finite => 1u32,
            Char::Zero => self.field.e() as u32,
        };
        let mut nu = mu + self.config.nu_gap.max(1);
        while nu % e != 0 {
            nu += 1;
        }

        let (schedule, kind, s_chunks) = match &func.kind {
            FunctionKind::Polynomial { chain, coords } => {
                let r = (chain.len() - 1) as u32;
                assert!(item.k < r, "queue order beyond the chain");
                let g = &chain[item.k as usize];
                let a_exp = if item.k == r - 1 {
                    // Top order: the next derivative is the chain's
                    // terminal constant.
                    let c = chain[(item.k + 1) as usize]
                        .constant_value()
                        .expect("chain ends in a constant");
                    self.field
                        .valuation(&c)
                        .finite()
                        .expect("checked nonvanishing at registration")
                } else {
                    // Lower order: the directly preceding stage handled
                    // (ℓ, k+1, σ, j0) and its bound covers the present
                    // regions.
                    let prev = self.stages.last().ok_or_else(|| {
                        Error::Infeasible("order below top with no previous stage".into())
                    })?;
                    let expected = QueueItem {
                        ell: item.ell,
                        k: item.k + 1,
                        sigma: item.sigma.clone(),
                        j0: item.j0,
                    };
                    if prev.item != expected {
                        return Err(Error::Infeasible(format!(
                            "queue order violated: stage {} processed {:?}, \
                             not the order-{} partner of {:?}",
                            j - 1,
                            prev.item,
                            item.k + 1,
                            item
                        )));
                    }
                    prev.lower_bound_exp().ok_or_else(|| {
                        Error::Infeasible(
                            "previous stage was vacuous yet this region is nonempty".into(),
                        )
                    })?
                };
                let coord = coords[item.k as usize];
                let (s, lambda, lower, delta_val, constant_path) =
                    poly_step_chunks(&t, g, a_exp, mu, nu, coord)?;
                (
                    StageSchedule { mu, nu, lambda },
                    CertKind::Polynomial {
                        a_exp,
                        lower_bound_exp: lower,
                        delta_val,
                        constant_path,
                    },
                    s,
                )
            }
            FunctionKind::Smooth(f) => {
                // The smooth step works on explicit families; regions must
                // fit the enumeration budget.
                let fams: Vec<BallFamily> = t
                    .iter()
                    .map(|c| BallFamily::new(chunks::explode(c)?, mu))
                    .collect::<Result<_>>()?;
                let (s_fams, certificate, _projections) =
                    smooth::avoid_single_scale_smooth(&fams, f, mu, nu, &self.config.smooth_opts)?;
                let lambda = certificate.lambda;
                let s = s_fams
                    .iter()
                    .map(|fam| fam.balls.iter().map(Chunk::solid).collect())
                    .collect();
                (
                    StageSchedule { mu, nu, lambda },
                    CertKind::Smooth { certificate },
                    s,
                )
            }
        };

        let feasible = schedule_feasible(j, &schedule, func);
        let lambda = schedule.lambda;
        // Splice: remove the regions from the untouched leaves, re-express
        // the remainder at λ, and add the selected families.
        let mut new_chunks: Vec<Chunk> = Vec::new();
        for leaf in &cur.chunks {
            let mut pieces = vec![leaf.clone()];
            for b in &regions {
                pieces = pieces.iter().flat_map(|c| c.subtract_ball(b)).collect();
            }
            new_chunks.extend(pieces.into_iter().map(|c| c.bump_scale(lambda)));
        }
        for fam in &s_chunks {
            new_chunks.extend(fam.iter().cloned());
        }
        new_chunks.sort_by_key(Chunk::key);
        let record = StageRecord { item, schedule, kind, regions, s_chunks, feasible };
        self.finish_stage(j, Level { lambda, chunks: new_chunks }, record)
    }

    fn finish_stage(&mut self, j: usize, level: Level, record: StageRecord) -> Result<&StageRecord> {
        let leaf_count = level.leaf_count()?;
        let specs = queue_specs(&self.functions);
        self.levels.push(level);
        self.stages.push(record);
        self.blocks.push(queue::make_block(j, leaf_count, &specs));
        Ok(self.stages.last().expect("just pushed"))
    }

    /// Process up to `steps` further stages. Precision exhaustion is a
    /// clean halt — the tree so far stays valid — so it ends the run
    /// rather than propagating. Returns the number of stages completed.
    pub fn run(&mut self, steps: usize) -> Result<usize> {
        for done in 0..steps {
            match self.process_next() {
                Ok(_) => {}
                Err(Error::PrecisionExhausted(_)) => return Ok(done),
                Err(e) => return Err(e),
            }
        }
        Ok(steps)
    }

    /// Re-verify stage i's bound against the CURRENT leaves inside its
    /// regions. Refinement only shrinks families, so certificates must
    /// keep holding; a witness tuple is returned if one does not.
    pub fn verify_stage(&self, i: usize) -> Result<Option<Vec<Element>>> {
        let record = &self.stages[i];
        let Some(bound) = record.lower_bound_exp() else {
            return Ok(None);
        };
        let leaves = &self.current().chunks;
        let families: Vec<Vec<Chunk>> = record
            .regions
            .iter()
            .map(|b| chunks::restrict_all(leaves, b))
            .collect();
        let func = &self.functions[record.item.ell - 1];
        let claim = match &func.kind {
            FunctionKind::Polynomial { chain, .. } => {
                verify::ValueClaim::Poly(&chain[record.item.k as usize])
            }
            FunctionKind::Smooth(f) => verify::ValueClaim::Smooth(f),
        };
        verify::verify_bound(&claim, &families, bound)
    }

    /// Re-verify every stage; the first violation is returned as
    /// (stage index, witness tuple).
    pub fn verify_all(&self) -> Result<Option<(usize, Vec<Element>)>> {
        for i in 0..self.stages.len() {
            if let Some(w) = self.verify_stage(i)? {
                return Ok(Some((i, w)));
            }
        }
        Ok(None)
    }
}

fn queue_specs(functions: &[FunctionEntry]) -> Vec<(usize, u32)> {
    functions.iter().map(|f| (f.v(), f.order_count())).collect()
}

/// The chunk-native polynomial avoidance step: every ν-ball's canonical
/// center becomes a λ-ball, and the slot holding the active coordinate is
/// translated by the uniformizer power δ. Chunks pass through whole: the
/// center pick keeps each free set, and the translation adds a digit above
/// every free position.
fn poly_step_chunks(
    t: &[Vec<Chunk>],
    g: &IntPolynomial,
    a_exp: u32,
    mu: u32,
    nu: u32,
    coord: usize,
) -> Result<(Vec<Vec<Chunk>>, u32, u32, u32, bool)> {
    let field = g.field().clone();
    let (n, v) = (g.n(), g.v());
    assert_eq!(t.len(), v, "one family per slot");
    assert!(nu > mu, "the working scale must refine the region scale");
    if let Some(c) = g.constant_value() {
        // Constant polynomial: every selection works and the bound is the
        // constant's own valuation.
        let lower = field.valuation(&c).finite().ok_or_else(|| {
            Error::Infeasible("the zero polynomial vanishes everywhere".into())
        })?;
        let s = t
            .iter()
            .map(|fam| fam.iter().map(|c| c.bump_scale(nu)).collect())
            .collect();
        return Ok((s, nu, lower, 0, true));
    }
    let (_h, lambda, delta_val, lower) = poly::step_scales(g, a_exp, nu)?;
    debug_assert!(delta_val >= nu, "translation must stay inside its ν-ball");
    let delta = field.pow(&field.uniformizer(), delta_val as u64);
    let slot = coord / n;
    let within = coord % n;
    let s = t
        .iter()
        .enumerate()
        .map(|(i, fam)| {
            fam.iter()
                .map(|c| {
                    let picked = c.bump_scale(nu).refine_keep_centers(lambda);
                    if i == slot {
                        picked.translate(within, &delta, delta_val)
                    } else {
                        picked
                    }
                })
                .collect()
        })
        .collect();
    Ok((s, lambda, lower, delta_val, false))
}

/// The logged schedule inequality λ_j < ν_j(1/D + ε_j) − n·μ_j with
/// ε_j = 1/(j+1); the smooth case replaces 1/D by n/D with its own
/// rational D. Cross-multiplied exactly over integers.
fn schedule_feasible(j: usize, schedule: &StageSchedule, func: &FunctionEntry) -> bool {
    let (mu, nu, lambda) = (
        schedule.mu as i128,
        schedule.nu as i128,
        schedule.lambda as i128,
    );
    let n = func.n() as i128;
    let jj = (j + 1) as i128;
    match &func.kind {
        FunctionKind::Polynomial { chain, .. } => {
            let d = chain[0].degree().max(1) as i128;
            // λ < ν(1/D + 1/(j+1)) − n·μ, times D(j+1):
            lambda * d * jj < nu * jj + nu * d - n * mu * d * jj
        }
        FunctionKind::Smooth(f) => {
            // D = m/(n(v−1)), so n/D = n²(v−1)/m; times m(j+1):
            let m = f.m() as i128;
            let vv = f.v() as i128;
            lambda * m * jj < nu * n * n * (vv - 1) * jj + nu * m - n * mu * m * jj
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;

    fn ap3(field: &Field) -> IntPolynomial {
        IntPolynomial::from_int_coeffs(
            field,
            1,
            3,
            &[(vec![1, 0, 0], 1), (vec![0, 1, 0], -2), (vec![0, 0, 1], 1)],
        )
        .unwrap()
    }

    #[test]
    fn derivative_chains_terminate_or_reject() {
        let k = Field::new(FieldSpec::zp(5, 30)).unwrap();
        let f = FunctionEntry::polynomial("ap3", ap3(&k)).unwrap();
        assert_eq!(f.order_count(), 1, "linear form: one order");
        match f.kind() {
            FunctionKind::Polynomial { chain, coords } => {
                assert_eq!(chain.len(), 2);
                assert_eq!(coords, &[0], "first coordinate has partial 1");
            }
            _ => unreachable!(),
        }
        // x1²·x2 needs two differentiations.
        let g = IntPolynomial::from_int_coeffs(&k, 1, 2, &[(vec![2, 1], 1)]).unwrap();
        let g = FunctionEntry::polynomial("sqprod", g).unwrap();
        assert_eq!(g.order_count(), 3, "x1²x2 → 2x1x2 → 2x2 → 2");
        // x1^5 over F_5[[t]]: every partial vanishes identically.
        let f5 = Field::new(FieldSpec::fpt(5, 12)).unwrap();
        let frob = IntPolynomial::from_int_coeffs(&f5, 1, 1, &[(vec![5], 1)]).unwrap();
        assert!(FunctionEntry::polynomial("frobenius", frob).is_err());
    }

    #[test]
    fn initial_block_counts_match_the_arithmetic() {
        // Five residues, ternary function: M_0 = 5, perm(5,3) = 60 items.
        let k = Field::new(FieldSpec::zp(5, 40)).unwrap();
        let eng = Engine::new(
            &k,
            vec![FunctionEntry::polynomial("ap3", ap3(&k)).unwrap()],
            EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(eng.current().leaf_count().unwrap(), 5);
        assert_eq!(queue::queue_len(eng.blocks()), 60u32.into());
        // q = 3 at λ_0 = 2: M_0 = 9, perm(9,3) = 504.
        let k3 = Field::new(FieldSpec::zp(3, 40)).unwrap();
        let eng3 = Engine::new(
            &k3,
            vec![FunctionEntry::polynomial("ap3", ap3(&k3)).unwrap()],
            EngineConfig { lambda0: 2, ..EngineConfig::default() },
        )
        .unwrap();
        assert_eq!(eng3.current().leaf_count().unwrap(), 9);
        assert_eq!(queue::queue_len(eng3.blocks()), 504u32.into());
        // λ_0 must leave more balls than slots: 2 residues < 3 slots + 1.
        let k2 = Field::new(FieldSpec::zp(2, 40)).unwrap();
        assert!(Engine::new(
            &k2,
            vec![FunctionEntry::polynomial("ap3", ap3(&k2)).unwrap()],
            EngineConfig::default(),
        )
        .is_err());
    }

    #[test]
    fn three_stages_avoid_progressions_and_reverify() {
        let k = Field::new(FieldSpec::zp(5, 40)).unwrap();
        let mut eng = Engine::new(
            &k,
            vec![FunctionEntry::polynomial("ap3", ap3(&k)).unwrap()],
            EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(eng.run(3).unwrap(), 3);
        // The processed items walk the section tuples in lexicographic
        // order at the top (only) derivative order.
        let sigmas: Vec<Vec<u128>> =
            eng.stages().iter().map(|s| s.item.sigma.clone()).collect();
        assert_eq!(sigmas, vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 1, 4]]);
        // Scales strictly increase and every selected family keeps one
        // ball per ν-ball of its region.
        let mut prev = 1;
        for (i, st) in eng.stages().iter().enumerate() {
            assert!(st.schedule.lambda > st.schedule.nu);
            assert!(st.schedule.nu > st.schedule.mu);
            assert_eq!(st.schedule.mu, prev, "μ_j = λ_(j-1)");
            prev = st.schedule.lambda;
            assert!(
                matches!(st.kind, CertKind::Polynomial { a_exp: 0, .. }),
                "unit partial: A = 0 at stage {i}"
            );
        }
        // Levels nest: each level's leaves all lie inside the previous
        // level's leaves (project and compare).
        for w in eng.levels().windows(2) {
            let coarse = &w[0];
            for c in &w[1].chunks {
                let back = c.project(coarse.lambda);
                let covered = coarse
                    .chunks
                    .iter()
                    .any(|p| !p.disjoint_from(&back));
                assert!(covered, "refined chunk escaped the previous level");
            }
        }
        // Every certificate re-verifies against the final tree.
        assert_eq!(eng.verify_all().unwrap(), None);
        // Leaf counts: stage 1 picks 25 centers in each of 3 regions and
        // keeps 2 residues untouched.
        let l1 = &eng.levels()[1];
        let lam1 = l1.lambda;
        let expect1 = 2 * 5u128.pow(lam1 - 1) + 3 * 25;
        assert_eq!(l1.leaf_count().unwrap(), expect1);
    }

    #[test]
    fn case_two_consumes_the_previous_certificate() {
        // x1² − x2 has the chain x1²−x2 → 2x1 → 2: two orders. The queue
        // schedules (k=1, σ) then (k=0, σ); the k=0 stage must find its
        // derivative bound in the directly preceding stage's certificate.
        // A gap of 1 keeps the verification spaces small; the second stage
        // still lands around λ₂ = 40, so precision 50 leaves room.
        let k = Field::new(FieldSpec::zp(5, 50)).unwrap();
        let f = IntPolynomial::from_int_coeffs(&k, 1, 2, &[(vec![2, 0], 1), (vec![0, 1], -1)])
            .unwrap();
        let config = EngineConfig { nu_gap: 1, ..EngineConfig::default() };
        let mut eng = Engine::new(
            &k,
            vec![FunctionEntry::polynomial("graph-square", f).unwrap()],
            config,
        )
        .unwrap();
        assert_eq!(eng.run(2).unwrap(), 2);
        let s1 = &eng.stages()[0];
        let s2 = &eng.stages()[1];
        assert_eq!((s1.item.ell, s1.item.k), (1, 1));
        assert_eq!((s2.item.ell, s2.item.k), (1, 0));
        assert_eq!(s1.item.sigma, s2.item.sigma, "same section tuple");
        let CertKind::Polynomial { lower_bound_exp: l1, .. } = &s1.kind else {
            panic!("stage 1 must be a polynomial step");
        };
        let CertKind::Polynomial { a_exp: a2, constant_path, .. } = &s2.kind else {
            panic!("stage 2 must be a polynomial step");
        };
        assert_eq!(a2, l1, "order-0 stage consumes the order-1 bound");
        assert!(!constant_path);
        assert_eq!(eng.verify_all().unwrap(), None);
    }

    #[test]
    fn second_function_enters_from_block_one() {
        // Two ternary forms: block 0 admits only ℓ = 1; every block from
        // stage 1 on carries both sections in function order, so the queue
        // interleaves the functions from index 60 onward.
        let k = Field::new(FieldSpec::zp(5, 40)).unwrap();
        let g = IntPolynomial::from_int_coeffs(
            &k,
            1,
            3,
            &[(vec![1, 0, 0], 1), (vec![0, 1, 0], 1), (vec![0, 0, 1], -2)],
        )
        .unwrap();
        let mut eng = Engine::new(
            &k,
            vec![
                FunctionEntry::polynomial("ap3", ap3(&k)).unwrap(),
                FunctionEntry::polynomial("ap3-rev", g).unwrap(),
            ],
            EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(eng.blocks()[0].sections.len(), 1, "only ℓ = 1 at the start");
        assert_eq!(eng.run(4).unwrap(), 4);
        for b in &eng.blocks()[1..] {
            assert_eq!(b.sections.len(), 2, "both functions admitted");
            assert_eq!(b.sections[0].ell, 1);
            assert_eq!(b.sections[1].ell, 2);
        }
        // The first ℓ = 2 item sits right after block 0's 60 items plus
        // block 1's ℓ = 1 section.
        let after_block0 = 60u64;
        let block1_l1: u64 = {
            use num_traits::ToPrimitive;
            eng.blocks()[1].sections[0].len.to_u64().unwrap()
        };
        let first_l2 = queue::item_at(eng.blocks(), after_block0 + block1_l1).unwrap();
        assert_eq!(first_l2.ell, 2);
        assert_eq!(first_l2.j0, 1);
        assert_eq!(first_l2.sigma, vec![0, 1, 2]);
        // Queue-completeness bookkeeping: each block's tuple counts are
        // the falling factorials of its level's leaf count.
        for (j, b) in eng.blocks().iter().enumerate() {
            assert_eq!(b.leaf_count, eng.levels()[j].leaf_count().unwrap());
            for s in &b.sections {
                assert_eq!(s.sigma_count, queue::perm(b.leaf_count, s.v));
            }
        }
    }

    #[test]
    fn vacuous_stage_keeps_level_and_alignment() {
        // Engineer a vacuous stage: process items until some σ-region of
        // level 0 has lost all leaves. After stage 1 avoids over regions
        // {0,1,2}, the untouched residues 3 and 4 stay full; regions keep
        // content forever (each ν-ball keeps a center), so a natural
        // vacuous stage needs a smooth thinner — instead, check the
        // mechanism directly by restricting to a ball nothing survives in.
        let k = Field::new(FieldSpec::zp(5, 40)).unwrap();
        let mut eng = Engine::new(
            &k,
            vec![FunctionEntry::polynomial("ap3", ap3(&k)).unwrap()],
            EngineConfig::default(),
        )
        .unwrap();
        eng.run(1).unwrap();
        // Manually drop every leaf inside residue 3 (an untouched chunk).
        let cur = eng.levels.last_mut().unwrap();
        let b3 = Ball::of(&[k.from_i64(3)], 1);
        cur.chunks.retain(|c| c.restrict_to(&b3).is_none());
        let before = cur.chunks.len();
        // Item 1 is σ = (0,1,3): slot 3 region is now empty → vacuous.
        let record = eng.process_next().unwrap();
        assert!(matches!(record.kind, CertKind::Vacuous));
        assert_eq!(record.lower_bound_exp(), None);
        let after = eng.current();
        assert_eq!(after.chunks.len(), before, "level carried unchanged");
        assert_eq!(after.lambda, eng.levels()[1].lambda);
        // The engine keeps processing later items normally.
        let next = eng.process_next().unwrap();
        assert_eq!(next.item.sigma, vec![0, 1, 4]);
        assert!(matches!(next.kind, CertKind::Polynomial { .. }));
    }
}
