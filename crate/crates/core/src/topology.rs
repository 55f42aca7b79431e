//! Evolving sparse bipartite connection structure.
//!
//! A layer's connectivity starts as an Erdős–Rényi random bipartite graph
//! whose expected link count is linear in the neuron count, and is mutated
//! once per training epoch: the fraction `zeta` of weights closest to zero
//! (per sign group) is removed and, except after the final epoch, the same
//! number of links is regrown at uniformly random free positions.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// One weighted connection between input neuron `in_idx` and output
/// neuron `out_idx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub in_idx: u32,
    pub out_idx: u32,
    pub weight: f64,
}

/// Which side of the bipartite layer a per-neuron quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Input,
    Output,
}

/// Connectivity policy of a model built from sparse layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsityMode {
    /// Sparse init, topology evolves every epoch.
    Set,
    /// Sparse init with the same distribution, topology frozen.
    FixProb,
    /// Every possible link present.
    Dense,
}

/// Parameters governing sparse initialization and per-epoch evolution.
#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    /// Sparsity control: expected links = epsilon * (n_in + n_out).
    pub epsilon: f64,
    /// Fraction of each sign group removed per evolution step.
    pub zeta: f64,
    /// Seed for initialization (and for standalone evolution helpers).
    pub seed: u64,
    /// Regrow after removal. Disabled only for a final epoch.
    pub regrow: bool,
    /// Exclude positions vacated in the same step from the regrowth pool.
    /// Default false: a freshly removed position may be re-selected.
    pub exclude_removed_from_regrowth: bool,
}

impl EvolutionConfig {
    pub fn new(epsilon: f64, zeta: f64, seed: u64) -> Result<Self> {
        let cfg = EvolutionConfig {
            epsilon,
            zeta,
            seed,
            regrow: true,
            exclude_removed_from_regrowth: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(0.0..1.0).contains(&self.zeta) {
            return Err(Error::InvalidParameter(format!(
                "zeta must be in [0, 1), got {}",
                self.zeta
            )));
        }
        Ok(())
    }

    pub fn with_regrow(mut self, regrow: bool) -> Self {
        self.regrow = regrow;
        self
    }
}

/// Distribution for initial and regrown weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInitSpec {
    /// Zero-mean uniform on [-1/sqrt(n_in), +1/sqrt(n_in)].
    FanInUniform,
    /// Zero-mean uniform on [-limit, +limit].
    Uniform { limit: f64 },
    /// Zero-mean Gaussian with the given standard deviation.
    Gaussian { std_dev: f64 },
}

impl Default for WeightInitSpec {
    fn default() -> Self {
        WeightInitSpec::FanInUniform
    }
}

impl WeightInitSpec {
    pub fn sample<R: Rng>(&self, n_in: usize, rng: &mut R) -> f64 {
        match *self {
            WeightInitSpec::FanInUniform => {
                let limit = 1.0 / (n_in as f64).sqrt();
                rng.gen_range(-limit..limit)
            }
            WeightInitSpec::Uniform { limit } => rng.gen_range(-limit..limit),
            WeightInitSpec::Gaussian { std_dev } => {
                use rand_distr::Distribution;
                rand_distr::Normal::new(0.0, std_dev)
                    .expect("std_dev must be finite and non-negative")
                    .sample(rng)
            }
        }
    }
}

/// Audit trail of one evolution step.
#[derive(Debug, Clone, Default)]
pub struct EvolutionDelta {
    pub removed: Vec<Link>,
    pub added: Vec<Link>,
}

/// Maps link indices across an evolution step so per-link optimizer state
/// can follow the surviving links. `old_to_new[i] = None` means link `i`
/// was removed.
#[derive(Debug, Clone)]
pub struct LinkRemap {
    pub old_to_new: Vec<Option<u32>>,
    pub new_len: usize,
}

/// Expected link count of the Erdős–Rényi layer:
/// `min(n_in*n_out, epsilon*(n_in+n_out))`.
pub fn expected_connection_count(n_in: usize, n_out: usize, epsilon: f64) -> Result<f64> {
    if n_in == 0 || n_out == 0 {
        return Err(Error::InvalidParameter(format!(
            "layer dimensions must be positive, got {n_in}x{n_out}"
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let dense = n_in as f64 * n_out as f64;
    Ok(dense.min(epsilon * (n_in as f64 + n_out as f64)))
}

/// Per-position connection probability, clamped to 1.
pub fn connection_probability(n_in: usize, n_out: usize, epsilon: f64) -> Result<f64> {
    let expected = expected_connection_count(n_in, n_out, epsilon)?;
    Ok(expected / (n_in as f64 * n_out as f64))
}

/// Sparse weight matrix of one bipartite layer.
///
/// Links are kept sorted by `(in_idx, out_idx)` with no duplicates; this
/// order doubles as a CSR layout over input neurons. A permutation sorted
/// by `(out_idx, in_idx)` is maintained alongside for output-major loops.
///
/// Not safe for concurrent mutation; reads may be shared freely between
/// mutations.
#[derive(Debug, Clone)]
pub struct SparseWeights {
    n_in: usize,
    n_out: usize,
    links: Vec<Link>,
    /// Offsets into `links` per input neuron (CSR), length n_in + 1.
    in_ptr: Vec<u32>,
    /// Link indices sorted by (out_idx, in_idx), length nnz.
    out_order: Vec<u32>,
    /// Offsets into `out_order` per output neuron (CSC), length n_out + 1.
    out_ptr: Vec<u32>,
}

impl SparseWeights {
    /// Build from an explicit link list; validates bounds and uniqueness.
    pub fn from_links(n_in: usize, n_out: usize, mut links: Vec<Link>) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidParameter(format!(
                "layer dimensions must be positive, got {n_in}x{n_out}"
            )));
        }
        for l in &links {
            if l.in_idx as usize >= n_in || l.out_idx as usize >= n_out {
                return Err(Error::InvalidParameter(format!(
                    "link ({}, {}) out of bounds for {}x{} layer",
                    l.in_idx, l.out_idx, n_in, n_out
                )));
            }
            if !l.weight.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite weight at link ({}, {})",
                    l.in_idx, l.out_idx
                )));
            }
        }
        links.sort_unstable_by_key(|l| (l.in_idx, l.out_idx));
        if links
            .windows(2)
            .any(|w| w[0].in_idx == w[1].in_idx && w[0].out_idx == w[1].out_idx)
        {
            return Err(Error::InvalidParameter(
                "duplicate link positions in link list".into(),
            ));
        }
        let mut w = SparseWeights {
            n_in,
            n_out,
            links,
            in_ptr: Vec::new(),
            out_order: Vec::new(),
            out_ptr: Vec::new(),
        };
        w.rebuild_index();
        Ok(w)
    }

    /// Erdős–Rényi initialization: every position exists independently
    /// with probability `epsilon*(n_in+n_out)/(n_in*n_out)` (clamped to 1),
    /// weights drawn from `init`. Deterministic in `config.seed`.
    pub fn init_erdos_renyi(
        n_in: usize,
        n_out: usize,
        config: &EvolutionConfig,
        init: &WeightInitSpec,
    ) -> Result<Self> {
        config.validate()?;
        let mut r = rng::seeded(config.seed);
        Self::init_erdos_renyi_with_rng(n_in, n_out, config.epsilon, init, &mut r)
    }

    /// Erdős–Rényi initialization from a caller-managed RNG stream.
    pub fn init_erdos_renyi_with_rng<R: Rng>(
        n_in: usize,
        n_out: usize,
        epsilon: f64,
        init: &WeightInitSpec,
        rng: &mut R,
    ) -> Result<Self> {
        let p = connection_probability(n_in, n_out, epsilon)?;
        let total = n_in * n_out;
        let mut links = Vec::with_capacity((p * total as f64 * 1.05) as usize + 16);
        if p >= 1.0 {
            for i in 0..n_in {
                for j in 0..n_out {
                    links.push(Link {
                        in_idx: i as u32,
                        out_idx: j as u32,
                        weight: init.sample(n_in, rng),
                    });
                }
            }
        } else {
            // Bernoulli process over the flat position index, visited via
            // geometric gap sampling: equivalent to an independent draw per
            // position, much faster at paper sparsity levels.
            let log_q = (-p).ln_1p();
            let mut pos: usize = 0;
            loop {
                let u: f64 = rng.gen::<f64>();
                // u in [0,1); 1-u in (0,1] avoids ln(0).
                let gap = ((1.0 - u).ln() / log_q).floor() as usize;
                pos = match pos.checked_add(gap) {
                    Some(p) => p,
                    None => break,
                };
                if pos >= total {
                    break;
                }
                links.push(Link {
                    in_idx: (pos / n_out) as u32,
                    out_idx: (pos % n_out) as u32,
                    weight: init.sample(n_in, rng),
                });
                pos += 1;
            }
        }
        // Flat index order is already (in_idx, out_idx) order.
        let mut w = SparseWeights {
            n_in,
            n_out,
            links,
            in_ptr: Vec::new(),
            out_order: Vec::new(),
            out_ptr: Vec::new(),
        };
        w.rebuild_index();
        Ok(w)
    }

    /// Fully connected layer with weights drawn from `init`.
    pub fn dense<R: Rng>(n_in: usize, n_out: usize, init: &WeightInitSpec, rng: &mut R) -> Self {
        let mut links = Vec::with_capacity(n_in * n_out);
        for i in 0..n_in {
            for j in 0..n_out {
                links.push(Link {
                    in_idx: i as u32,
                    out_idx: j as u32,
                    weight: init.sample(n_in, rng),
                });
            }
        }
        let mut w = SparseWeights {
            n_in,
            n_out,
            links,
            in_ptr: Vec::new(),
            out_order: Vec::new(),
            out_ptr: Vec::new(),
        };
        w.rebuild_index();
        w
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn nnz(&self) -> usize {
        self.links.len()
    }

    /// Links in canonical (in_idx, out_idx) order.
    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Mutable access to weight values only; the link structure and the
    /// adjacency indices stay untouched.
    pub fn for_each_weight_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        for (idx, link) in self.links.iter_mut().enumerate() {
            f(idx, &mut link.weight);
        }
    }

    /// Links of one input neuron (CSR row), canonical order.
    pub fn links_of_input(&self, i: usize) -> &[Link] {
        &self.links[self.in_ptr[i] as usize..self.in_ptr[i + 1] as usize]
    }

    /// Link indices of one output neuron, ascending in_idx.
    pub fn link_indices_of_output(&self, j: usize) -> &[u32] {
        &self.out_order[self.out_ptr[j] as usize..self.out_ptr[j + 1] as usize]
    }

    /// Per-neuron link counts on the chosen side. Sums to nnz.
    pub fn degree_distribution(&self, side: Side) -> Vec<usize> {
        let n = match side {
            Side::Input => self.n_in,
            Side::Output => self.n_out,
        };
        let mut degrees = vec![0usize; n];
        for l in &self.links {
            let idx = match side {
                Side::Input => l.in_idx,
                Side::Output => l.out_idx,
            };
            degrees[idx as usize] += 1;
        }
        degrees
    }

    /// One evolution step; see [`SparseWeights::evolve_tracked`].
    pub fn evolve<R: Rng>(
        &mut self,
        config: &EvolutionConfig,
        init: &WeightInitSpec,
        rng: &mut R,
    ) -> Result<EvolutionDelta> {
        self.evolve_tracked(config, init, rng).map(|(d, _)| d)
    }

    /// One evolution step, also reporting how surviving link indices moved.
    ///
    /// Removal: zeros and positive weights form one group sorted ascending
    /// (zeros first), negative weights the other sorted descending, so both
    /// groups lead with the weights closest to zero; `floor(zeta * group)`
    /// links are dropped from each, ties broken by (in_idx, out_idx).
    /// Regrowth (when `config.regrow`): the same total number of links is
    /// placed uniformly without replacement on positions free after
    /// removal, with fresh weights from `init`; nnz is unchanged.
    pub fn evolve_tracked<R: Rng>(
        &mut self,
        config: &EvolutionConfig,
        init: &WeightInitSpec,
        rng: &mut R,
    ) -> Result<(EvolutionDelta, LinkRemap)> {
        config.validate()?;
        let nnz = self.links.len();

        // Sign groups. Zeros count toward the positive group and sort
        // before every positive weight, so they are pruned preferentially.
        let mut pos_order: Vec<u32> = Vec::new();
        let mut neg_order: Vec<u32> = Vec::new();
        for (idx, l) in self.links.iter().enumerate() {
            if l.weight < 0.0 {
                neg_order.push(idx as u32);
            } else {
                pos_order.push(idx as u32);
            }
        }
        let n_remove_pos = (config.zeta * pos_order.len() as f64).floor() as usize;
        let n_remove_neg = (config.zeta * neg_order.len() as f64).floor() as usize;

        // Smallest weights first; canonical link order breaks ties.
        pos_order.sort_unstable_by(|&a, &b| {
            let (la, lb) = (&self.links[a as usize], &self.links[b as usize]);
            la.weight
                .partial_cmp(&lb.weight)
                .expect("weights are finite")
                .then(a.cmp(&b))
        });
        // Largest (closest to zero) negative weights first.
        neg_order.sort_unstable_by(|&a, &b| {
            let (la, lb) = (&self.links[a as usize], &self.links[b as usize]);
            lb.weight
                .partial_cmp(&la.weight)
                .expect("weights are finite")
                .then(a.cmp(&b))
        });

        let mut removed_mask = vec![false; nnz];
        let mut removed = Vec::with_capacity(n_remove_pos + n_remove_neg);
        for &idx in pos_order.iter().take(n_remove_pos) {
            removed_mask[idx as usize] = true;
            removed.push(self.links[idx as usize]);
        }
        for &idx in neg_order.iter().take(n_remove_neg) {
            removed_mask[idx as usize] = true;
            removed.push(self.links[idx as usize]);
        }
        let n_removed = removed.len();

        let added = if config.regrow && n_removed > 0 {
            let mut occupied: HashSet<(u32, u32)> = self
                .links
                .iter()
                .enumerate()
                .filter(|(idx, _)| {
                    !removed_mask[*idx] || config.exclude_removed_from_regrowth
                })
                .map(|(_, l)| (l.in_idx, l.out_idx))
                .collect();
            let total = self.n_in * self.n_out;
            let available = total - occupied.len();
            if available < n_removed {
                return Err(Error::RegrowthPoolExhausted {
                    needed: n_removed,
                    available,
                });
            }
            let mut added = Vec::with_capacity(n_removed);
            if occupied.len() * 2 <= total {
                // Sparse regime: rejection sampling.
                while added.len() < n_removed {
                    let i = rng.gen_range(0..self.n_in) as u32;
                    let j = rng.gen_range(0..self.n_out) as u32;
                    if occupied.insert((i, j)) {
                        added.push(Link {
                            in_idx: i,
                            out_idx: j,
                            weight: init.sample(self.n_in, rng),
                        });
                    }
                }
            } else {
                // Dense regime: reservoir-sample the complement.
                let mut reservoir: Vec<(u32, u32)> = Vec::with_capacity(n_removed);
                let mut seen = 0usize;
                for i in 0..self.n_in as u32 {
                    for j in 0..self.n_out as u32 {
                        if occupied.contains(&(i, j)) {
                            continue;
                        }
                        seen += 1;
                        if reservoir.len() < n_removed {
                            reservoir.push((i, j));
                        } else {
                            let k = rng.gen_range(0..seen);
                            if k < n_removed {
                                reservoir[k] = (i, j);
                            }
                        }
                    }
                }
                for (i, j) in reservoir {
                    added.push(Link {
                        in_idx: i,
                        out_idx: j,
                        weight: init.sample(self.n_in, rng),
                    });
                }
            }
            added
        } else {
            Vec::new()
        };

        // Rebuild the canonical link list, tracking where survivors land.
        let new_len = nnz - n_removed + added.len();
        let mut tagged: Vec<(Link, Option<u32>)> = Vec::with_capacity(new_len);
        for (idx, l) in self.links.iter().enumerate() {
            if !removed_mask[idx] {
                tagged.push((*l, Some(idx as u32)));
            }
        }
        for l in &added {
            tagged.push((*l, None));
        }
        tagged.sort_unstable_by_key(|(l, _)| (l.in_idx, l.out_idx));

        let mut old_to_new: Vec<Option<u32>> = vec![None; nnz];
        let mut new_links = Vec::with_capacity(new_len);
        for (new_idx, (l, old_idx)) in tagged.into_iter().enumerate() {
            if let Some(old) = old_idx {
                old_to_new[old as usize] = Some(new_idx as u32);
            }
            new_links.push(l);
        }
        self.links = new_links;
        self.rebuild_index();

        debug_assert!(!config.regrow || self.links.len() == nnz);
        Ok((
            EvolutionDelta { removed, added },
            LinkRemap {
                old_to_new,
                new_len,
            },
        ))
    }

    /// Write the topology snapshot: header `n_in n_out nnz`, then one
    /// `in_idx out_idx weight` line per link in canonical order, weights
    /// in round-trip decimal precision.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.n_in, self.n_out, self.links.len())?;
        for l in &self.links {
            writeln!(w, "{} {} {}", l.in_idx, l.out_idx, l.weight)?;
        }
        Ok(())
    }

    /// Parse a topology snapshot produced by [`SparseWeights::write_snapshot`].
    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty topology snapshot".into()))??;
        let mut it = header.split_whitespace();
        let parse_usize = |tok: Option<&str>, what: &str| -> Result<usize> {
            tok.ok_or_else(|| Error::Parse(format!("snapshot header missing {what}")))?
                .parse()
                .map_err(|_| Error::Parse(format!("snapshot header has invalid {what}")))
        };
        let n_in = parse_usize(it.next(), "n_in")?;
        let n_out = parse_usize(it.next(), "n_out")?;
        let nnz = parse_usize(it.next(), "nnz")?;
        let mut links = Vec::with_capacity(nnz);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let err = |what: &str| Error::Parse(format!("snapshot line {}: {what}", lineno + 2));
            let in_idx: u32 = f
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| err("invalid in_idx"))?;
            let out_idx: u32 = f
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| err("invalid out_idx"))?;
            let weight: f64 = f
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| err("invalid weight"))?;
            links.push(Link {
                in_idx,
                out_idx,
                weight,
            });
        }
        if links.len() != nnz {
            return Err(Error::Parse(format!(
                "snapshot declares {} links but contains {}",
                nnz,
                links.len()
            )));
        }
        Self::from_links(n_in, n_out, links)
    }

    fn rebuild_index(&mut self) {
        // CSR offsets follow directly from the canonical sort.
        self.in_ptr = vec![0u32; self.n_in + 1];
        for l in &self.links {
            self.in_ptr[l.in_idx as usize + 1] += 1;
        }
        for i in 0..self.n_in {
            self.in_ptr[i + 1] += self.in_ptr[i];
        }
        // Counting sort by out_idx keeps in_idx ascending within a column.
        self.out_ptr = vec![0u32; self.n_out + 1];
        for l in &self.links {
            self.out_ptr[l.out_idx as usize + 1] += 1;
        }
        for j in 0..self.n_out {
            self.out_ptr[j + 1] += self.out_ptr[j];
        }
        let mut cursor: Vec<u32> = self.out_ptr[..self.n_out].to_vec();
        self.out_order = vec![0u32; self.links.len()];
        for (idx, l) in self.links.iter().enumerate() {
            let c = &mut cursor[l.out_idx as usize];
            self.out_order[*c as usize] = idx as u32;
            *c += 1;
        }
    }
}
