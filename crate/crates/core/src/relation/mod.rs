//! Task-specific feature enhancement.
//!
//! Each `T x C` sequence first passes through an intra-sequence operator
//! (multi-head self-attention with a residual, a transformer block, or a
//! bidirectional LSTM/GRU scan). Every refined sequence is then pooled over
//! time and re-expressed as a correlation-weighted mixture of the pooled
//! descriptors of all sequences in the episode pool:
//!
//! ```text
//! v_j   = mean_t f_j^a
//! k_ij  = softmax_j( (P_q v_i) . (P_k v_j) / sqrt(C) )
//! f_i^e = sum_j k_ij v_j
//! ```
//!
//! Finally `f_i^e` is tiled over time, concatenated with `f_i^a` along the
//! channel axis and mapped back to `C` channels by a shared per-frame linear
//! map (a 1x1 convolution).
//!
//! The taped functions take a [`Tape`] and [`ParamVars`]; the plain
//! functions at the bottom of the module wrap them for one-off use.

mod params;

pub use params::{
    IntraKind, ParamVars, RelationConfig, RelationParams, PARAMS_MAGIC, PARAMS_VERSION,
};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Which sequences make up the inter-relation pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PoolMode {
    /// Supports plus the current query.
    #[default]
    SupportAndQuery,
    /// Supports only; the query attends over the supports without joining
    /// the pool.
    SupportOnly,
}

/// Which halves of the relation module are active. With both off the
/// features pass through unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RelationFlags {
    pub intra: bool,
    pub inter: bool,
}

impl RelationFlags {
    pub const FULL: Self = Self {
        intra: true,
        inter: true,
    };
    pub const OFF: Self = Self {
        intra: false,
        inter: false,
    };

    pub fn any(&self) -> bool {
        self.intra || self.inter
    }
}

/// Forward or reverse scan over the frames of a sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scan {
    Forward,
    Reverse,
}

impl Scan {
    fn prefix(self) -> &'static str {
        match self {
            Scan::Forward => "fwd",
            Scan::Reverse => "bwd",
        }
    }
}

fn require_sequence(tape: &Tape, f: Var, channels: usize) -> Result<usize> {
    let s = tape.shape(f);
    if s.len() != 2 || s[1] != channels {
        return Err(Error::dim("relation input", &s, &[0, channels]));
    }
    Ok(s[0])
}

fn bias(tape: &Tape, p: &ParamVars, name: &str) -> Result<Var> {
    let b = p.get(name);
    let n = tape.shape(b)[1];
    tape.reshape(b, &[n])
}

/// `x W + b` for a `T x C_in` input.
fn affine(tape: &Tape, x: Var, p: &ParamVars, w: &str, b: &str) -> Result<Var> {
    let y = tape.matmul(x, p.get(w))?;
    let b = bias(tape, p, b)?;
    tape.add_bias(y, b)
}

/// `x W` for a `[C]` vector.
fn vec_mat(tape: &Tape, x: Var, w: Var) -> Result<Var> {
    let c = tape.shape(x)[0];
    let row = tape.reshape(x, &[1, c])?;
    let y = tape.matmul(row, w)?;
    let n = tape.shape(y)[1];
    tape.reshape(y, &[n])
}

/// `MSA(f; f; f) + f` with per-head projections and an output map.
pub fn msa(tape: &Tape, f: Var, p: &ParamVars) -> Result<Var> {
    let cfg = *p.config();
    require_sequence(tape, f, cfg.channels)?;
    let scale = 1.0 / (cfg.head_dim() as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let q = tape.matmul(f, p.get(&format!("msa.head{h}.wq")))?;
        let k = tape.matmul(f, p.get(&format!("msa.head{h}.wk")))?;
        let v = tape.matmul(f, p.get(&format!("msa.head{h}.wv")))?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let attn = tape.softmax(tape.scale(scores, scale));
        heads.push(tape.matmul(attn, v)?);
    }
    let cat = tape.concat_cols(&heads)?;
    let out = tape.matmul(cat, p.get("msa.wo"))?;
    tape.add(out, f)
}

/// `FFN(f_msa) + f_msa`, with a two-layer GELU feed-forward network.
pub fn transformer_block(tape: &Tape, f: Var, p: &ParamVars) -> Result<Var> {
    let a = msa(tape, f, p)?;
    let h = affine(tape, a, p, "ffn.w1", "ffn.b1")?;
    let h = tape.gelu(h);
    let out = affine(tape, h, p, "ffn.w2", "ffn.b2")?;
    tape.add(out, a)
}

fn gate(
    tape: &Tape,
    p: &ParamVars,
    prefix: &str,
    (wa, xa): (&str, Var),
    (wb, xb): (&str, Var),
) -> Result<Var> {
    let a = vec_mat(tape, xa, p.get(&format!("{prefix}.{wa}")))?;
    let b = vec_mat(tape, xb, p.get(&format!("{prefix}.{wb}")))?;
    let s = tape.add(a, b)?;
    let bv = p.get(&format!("{prefix}.b"));
    let c = tape.shape(bv)[1];
    let bv = tape.reshape(bv, &[c])?;
    tape.add(s, bv)
}

/// One LSTM step on `[C]` vectors; returns `(h_t, c_t)`.
pub fn lstm_cell_on(
    tape: &Tape,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    p: &ParamVars,
    scan: Scan,
) -> Result<(Var, Var)> {
    let c = p.config().channels;
    for v in [x, h_prev, c_prev] {
        if tape.shape(v) != [c] {
            return Err(Error::dim("lstm_cell", &tape.shape(v), &[c]));
        }
    }
    let d = scan.prefix();
    let pre = |g: &str| format!("lstm.{d}.{g}");
    let f_t = tape.sigmoid(gate(tape, p, &pre("f"), ("wh", h_prev), ("wx", x))?);
    let i_t = tape.sigmoid(gate(tape, p, &pre("i"), ("wh", h_prev), ("wx", x))?);
    let c_hat = tape.tanh(gate(tape, p, &pre("c"), ("wh", h_prev), ("wx", x))?);
    let keep = tape.mul(f_t, c_prev)?;
    let write = tape.mul(i_t, c_hat)?;
    let c_t = tape.add(keep, write)?;
    let o_t = tape.sigmoid(gate(tape, p, &pre("o"), ("wh", h_prev), ("wx", x))?);
    let h_t = tape.mul(o_t, tape.tanh(c_t))?;
    Ok((h_t, c_t))
}

/// One GRU step on `[C]` vectors.
pub fn gru_cell_on(tape: &Tape, x: Var, h_prev: Var, p: &ParamVars, scan: Scan) -> Result<Var> {
    let c = p.config().channels;
    for v in [x, h_prev] {
        if tape.shape(v) != [c] {
            return Err(Error::dim("gru_cell", &tape.shape(v), &[c]));
        }
    }
    let d = scan.prefix();
    let pre = |g: &str| format!("gru.{d}.{g}");
    let z = tape.sigmoid(gate(tape, p, &pre("z"), ("w", x), ("u", h_prev))?);
    let r = tape.sigmoid(gate(tape, p, &pre("r"), ("w", x), ("u", h_prev))?);
    let rh = tape.mul(r, h_prev)?;
    let h_hat = tape.tanh(gate(tape, p, &pre("h"), ("w", x), ("u", rh))?);
    let one = tape.leaf(Tensor::full(&[c], 1.0));
    let keep = tape.mul(tape.sub(one, z)?, h_prev)?;
    let write = tape.mul(z, h_hat)?;
    tape.add(keep, write)
}

/// Runs both scan directions, sums their per-frame outputs and maps the
/// sum through a learned `C x C` map plus bias.
fn bi_recurrent(tape: &Tape, f: Var, p: &ParamVars) -> Result<Var> {
    let cfg = *p.config();
    let t = require_sequence(tape, f, cfg.channels)?;
    let lstm = cfg.intra == IntraKind::BiLstm;
    let zero = tape.leaf(Tensor::zeros(&[cfg.channels]));
    let mut per_frame: Vec<Option<Var>> = vec![None; t];
    for scan in [Scan::Forward, Scan::Reverse] {
        let (mut h, mut c) = (zero, zero);
        let order: Box<dyn Iterator<Item = usize>> = match scan {
            Scan::Forward => Box::new(0..t),
            Scan::Reverse => Box::new((0..t).rev()),
        };
        for i in order {
            let x = tape.row(f, i)?;
            if lstm {
                (h, c) = lstm_cell_on(tape, x, h, c, p, scan)?;
            } else {
                h = gru_cell_on(tape, x, h, p, scan)?;
            }
            per_frame[i] = Some(match per_frame[i] {
                Some(prev) => tape.add(prev, h)?,
                None => h,
            });
        }
    }
    let rows: Vec<Var> = per_frame.into_iter().map(|v| v.expect("frame visited")).collect();
    let stacked = tape.stack_rows(&rows)?;
    let prefix = if lstm { "lstm" } else { "gru" };
    affine(tape, stacked, p, &format!("{prefix}.merge.w"), &format!("{prefix}.merge.b"))
}

/// Intra-sequence refinement; output shape equals input shape.
pub fn intra_relation_on(tape: &Tape, f: Var, p: &ParamVars) -> Result<Var> {
    match p.config().intra {
        IntraKind::Msa => msa(tape, f, p),
        IntraKind::TransformerBlock => transformer_block(tape, f, p),
        IntraKind::BiLstm | IntraKind::BiGru => bi_recurrent(tape, f, p),
    }
}

/// Result of the inter-relation step.
pub struct InterOutput {
    /// One `[C]` enhanced descriptor per target, in target order.
    pub enhanced: Vec<Var>,
    /// `targets x pool` correlation matrix, rows summing to one. Columns
    /// follow the caller's pool order.
    pub kappa: Tensor,
}

/// Enhances each of `targets` (`T x C` each) against `pool`.
///
/// The pool is processed in a canonical order (sorted by pooled
/// descriptor), so permuting the pool permutes nothing but the output
/// order, bit for bit.
pub fn inter_relation_on(
    tape: &Tape,
    targets: &[Var],
    pool: &[Var],
    p: &ParamVars,
) -> Result<InterOutput> {
    if pool.is_empty() || targets.is_empty() {
        return Err(Error::Domain("inter-relation needs a non-empty pool".into()));
    }
    let c = p.config().channels;
    for &v in targets.iter().chain(pool) {
        require_sequence(tape, v, c)?;
    }
    let pooled_pool: Vec<Var> = pool.iter().map(|&v| tape.mean_rows(v)).collect::<Result<_>>()?;
    let order = canonical_order(tape, &pooled_pool);
    let sorted: Vec<Var> = order.iter().map(|&i| pooled_pool[i]).collect();
    let pool_mat = tape.stack_rows(&sorted)?;

    let pooled_targets: Vec<Var> = targets.iter().map(|&v| tape.mean_rows(v)).collect::<Result<_>>()?;
    let target_mat = tape.stack_rows(&pooled_targets)?;

    let q = tape.matmul(target_mat, p.get("inter.pq"))?;
    let k = tape.matmul(pool_mat, p.get("inter.pk"))?;
    let kt = tape.transpose(k)?;
    let scores = tape.scale(tape.matmul(q, kt)?, 1.0 / (c as f64).sqrt());
    let kappa = tape.softmax(scores);
    let mixed = tape.matmul(kappa, pool_mat)?;
    let enhanced = (0..targets.len())
        .map(|i| tape.row(mixed, i))
        .collect::<Result<Vec<_>>>()?;

    let kv = tape.value(kappa);
    let m = pool.len();
    let mut kappa_out = vec![0.0; targets.len() * m];
    for i in 0..targets.len() {
        for (col, &orig) in order.iter().enumerate() {
            kappa_out[i * m + orig] = kv.get(i, col);
        }
    }
    Ok(InterOutput {
        enhanced,
        kappa: Tensor::from_parts(vec![targets.len(), m], kappa_out),
    })
}

fn canonical_order(tape: &Tape, pooled: &[Var]) -> Vec<usize> {
    let values: Vec<_> = pooled.iter().map(|&v| tape.value(v)).collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .data()
            .iter()
            .zip(values[b].data())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Tiles `f_e` over the frames of `f_a`, concatenates `[f_a | f_e]` and
/// applies the shared per-frame map `2C -> C`.
pub fn fuse_on(tape: &Tape, f_a: Var, f_e: Var, p: &ParamVars) -> Result<Var> {
    let c = p.config().channels;
    let t = require_sequence(tape, f_a, c)?;
    if tape.shape(f_e) != [c] {
        return Err(Error::dim("fuse", &tape.shape(f_e), &[c]));
    }
    let tiled = tape.tile_rows(f_e, t)?;
    let cat = tape.concat_cols(&[f_a, tiled])?;
    affine(tape, cat, p, "fuse.w", "fuse.b")
}

/// Task-specific features for one query and its supports.
#[derive(Clone, Debug)]
pub struct EnhancedVars {
    pub supports: Vec<Var>,
    pub query: Var,
}

/// Applies intra-relation to every sequence, inter-relation over the pool
/// chosen by `mode`, and the fusion map. Inactive halves are skipped.
pub fn hybrid_relation_on(
    tape: &Tape,
    supports: &[Var],
    query: Var,
    p: &ParamVars,
    flags: RelationFlags,
    mode: PoolMode,
) -> Result<EnhancedVars> {
    if supports.is_empty() {
        return Err(Error::Domain("hybrid relation needs at least one support".into()));
    }
    let refine = |v: Var| -> Result<Var> {
        if flags.intra {
            intra_relation_on(tape, v, p)
        } else {
            Ok(v)
        }
    };
    let sa: Vec<Var> = supports.iter().map(|&v| refine(v)).collect::<Result<_>>()?;
    let qa = refine(query)?;
    if !flags.inter {
        return Ok(EnhancedVars {
            supports: sa,
            query: qa,
        });
    }
    let (se, qe) = match mode {
        PoolMode::SupportAndQuery => {
            let mut pool = sa.clone();
            pool.push(qa);
            let mut out = inter_relation_on(tape, &pool, &pool, p)?.enhanced;
            let qe = out.pop().expect("pool has the query");
            (out, qe)
        }
        PoolMode::SupportOnly => {
            let se = inter_relation_on(tape, &sa, &sa, p)?.enhanced;
            let qe = inter_relation_on(tape, &[qa], &sa, p)?.enhanced[0];
            (se, qe)
        }
    };
    let supports = sa
        .iter()
        .zip(&se)
        .map(|(&a, &e)| fuse_on(tape, a, e, p))
        .collect::<Result<_>>()?;
    let query = fuse_on(tape, qa, qe, p)?;
    Ok(EnhancedVars { supports, query })
}

// Plain wrappers.

fn with_tape<T>(params: &RelationParams, f: impl FnOnce(&Tape, &ParamVars) -> Result<T>) -> Result<T> {
    let tape = Tape::new();
    let p = params.register(&tape);
    f(&tape, &p)
}

pub fn intra_relation(f: &Tensor, params: &RelationParams) -> Result<Tensor> {
    with_tape(params, |tape, p| {
        let out = intra_relation_on(tape, tape.leaf(f.clone()), p)?;
        Ok((*tape.value(out)).clone())
    })
}

/// One LSTM step; returns `(h_t, c_t)`.
pub fn lstm_cell(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    params: &RelationParams,
    scan: Scan,
) -> Result<(Tensor, Tensor)> {
    if params.config().intra != IntraKind::BiLstm {
        return Err(Error::Config("lstm_cell needs bilstm parameters".into()));
    }
    with_tape(params, |tape, p| {
        let (h, c) = lstm_cell_on(
            tape,
            tape.leaf(x.clone()),
            tape.leaf(h_prev.clone()),
            tape.leaf(c_prev.clone()),
            p,
            scan,
        )?;
        Ok(((*tape.value(h)).clone(), (*tape.value(c)).clone()))
    })
}

pub fn gru_cell(x: &Tensor, h_prev: &Tensor, params: &RelationParams, scan: Scan) -> Result<Tensor> {
    if params.config().intra != IntraKind::BiGru {
        return Err(Error::Config("gru_cell needs bigru parameters".into()));
    }
    with_tape(params, |tape, p| {
        let h = gru_cell_on(tape, tape.leaf(x.clone()), tape.leaf(h_prev.clone()), p, scan)?;
        Ok((*tape.value(h)).clone())
    })
}

/// Pooled enhanced descriptors (`[C]` each) for every member of `pool`,
/// plus the correlation matrix.
pub fn inter_relation(pool: &[Tensor], params: &RelationParams) -> Result<(Vec<Tensor>, Tensor)> {
    if let Some(first) = pool.first() {
        for f in pool {
            if f.ndim() != 2 || f.cols() != first.cols() {
                return Err(Error::dim("inter_relation", first.shape(), f.shape()));
            }
        }
    }
    with_tape(params, |tape, p| {
        let vars: Vec<Var> = pool.iter().map(|f| tape.leaf(f.clone())).collect();
        let out = inter_relation_on(tape, &vars, &vars, p)?;
        let enhanced = out.enhanced.iter().map(|&v| (*tape.value(v)).clone()).collect();
        Ok((enhanced, out.kappa))
    })
}

pub fn fuse(f_a: &Tensor, f_e: &Tensor, params: &RelationParams) -> Result<Tensor> {
    with_tape(params, |tape, p| {
        let out = fuse_on(tape, tape.leaf(f_a.clone()), tape.leaf(f_e.clone()), p)?;
        Ok((*tape.value(out)).clone())
    })
}

/// Task-specific features of every support and of the query.
#[derive(Clone, Debug, PartialEq)]
pub struct EnhancedFeatures {
    pub supports: Vec<Tensor>,
    pub query: Tensor,
    pub mode: PoolMode,
}

pub fn hybrid_relation(
    supports: &[Tensor],
    query: &Tensor,
    params: &RelationParams,
    flags: RelationFlags,
    mode: PoolMode,
) -> Result<EnhancedFeatures> {
    with_tape(params, |tape, p| {
        let s: Vec<Var> = supports.iter().map(|f| tape.leaf(f.clone())).collect();
        let q = tape.leaf(query.clone());
        let out = hybrid_relation_on(tape, &s, q, p, flags, mode)?;
        Ok(EnhancedFeatures {
            supports: out.supports.iter().map(|&v| (*tape.value(v)).clone()).collect(),
            query: (*tape.value(out.query)).clone(),
            mode,
        })
    })
}
