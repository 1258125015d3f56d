//! Regular (3,6) rate-1/2 LDPC code.
//!
//! The parity-check matrix comes from a seeded socket (configuration-model)
//! construction: every check owns six sockets, every variable takes three.
//! Repeated edges are always repaired; length-4 cycles are removed by local
//! socket swaps on a best-effort basis. A construction attempt whose `H` is
//! rank deficient is discarded and redrawn from a derived stream.

use rand::seq::SliceRandom;
use rand::Rng;

use super::qpsk::LlrBlock;
use super::BitStream;
use crate::channel::RngStream;
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

pub const COLUMN_WEIGHT: usize = 3;
pub const ROW_WEIGHT: usize = 6;
/// Normalisation applied to every check-to-variable message.
pub const MIN_SUM_SCALE: f64 = 0.75;

const MAX_ATTEMPTS: u64 = 32;
const CYCLE_REPAIR_TRIES: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    construction_seed: u64,
    /// `check_vars[c]` lists the variables in check `c`, sorted.
    check_vars: Vec<Vec<usize>>,
    var_checks: Vec<Vec<usize>>,
    /// Systematic generator rows, bit-packed, one per message bit.
    generator: Vec<Vec<u64>>,
    /// Codeword positions carrying message bits, in message order.
    message_positions: Vec<usize>,
    four_cycles: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub message: BitStream,
    pub codeword: BitStream,
    pub converged: bool,
    pub iterations: usize,
}

impl LdpcCode {
    pub fn new(n: usize, construction_seed: u64) -> Result<Self> {
        if n < 64 || n % 2 != 0 {
            return Err(Error::Construction(format!("codeword length must be even and >= 64, got {n}")));
        }
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = RngStream::new(construction_seed, attempt);
            let var_checks = socket_graph(n, &mut rng);
            let mut code = Self::from_var_checks(n, construction_seed, var_checks);
            if let Some((generator, message_positions)) = systematic_generator(&code.check_vars, n) {
                code.generator = generator;
                code.message_positions = message_positions;
                return Ok(code);
            }
        }
        Err(Error::Construction(format!(
            "no full-rank parity-check matrix for n={n} after {MAX_ATTEMPTS} attempts"
        )))
    }

    fn from_var_checks(n: usize, seed: u64, var_checks: Vec<Vec<usize>>) -> Self {
        let m = n / 2;
        let mut check_vars = vec![Vec::with_capacity(ROW_WEIGHT); m];
        for (v, checks) in var_checks.iter().enumerate() {
            for &c in checks {
                check_vars[c].push(v);
            }
        }
        let four_cycles = count_four_cycles(&var_checks, &check_vars);
        Self {
            n,
            k: n - m,
            construction_seed: seed,
            check_vars,
            var_checks,
            generator: Vec::new(),
            message_positions: Vec::new(),
            four_cycles,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn construction_seed(&self) -> u64 {
        self.construction_seed
    }

    pub fn check_vars(&self) -> &[Vec<usize>] {
        &self.check_vars
    }

    pub fn message_positions(&self) -> &[usize] {
        &self.message_positions
    }

    /// Number of variable pairs that still share two or more checks.
    pub fn four_cycles(&self) -> usize {
        self.four_cycles
    }

    /// Dense `H`, one row per check.
    pub fn parity_check_dense(&self) -> Vec<Vec<u8>> {
        self.check_vars
            .iter()
            .map(|vars| {
                let mut row = vec![0u8; self.n];
                for &v in vars {
                    row[v] = 1;
                }
                row
            })
            .collect()
    }

    /// Dense systematic generator, one row per message bit.
    pub fn generator_dense(&self) -> Vec<Vec<u8>> {
        self.generator.iter().map(|row| unpack(row, self.n)).collect()
    }

    pub fn encode(&self, msg: &BitStream) -> Result<BitStream> {
        if msg.len() != self.k {
            return Err(Error::invalid(format!("message length {} != k = {}", msg.len(), self.k)));
        }
        let mut acc = vec![0u64; self.n.div_ceil(64)];
        for (row, &b) in self.generator.iter().zip(msg.as_slice()) {
            if b == 1 {
                for (a, r) in acc.iter_mut().zip(row) {
                    *a ^= r;
                }
            }
        }
        BitStream::new(unpack(&acc, self.n))
    }

    pub fn extract_message(&self, codeword: &[u8]) -> BitStream {
        BitStream::new(self.message_positions.iter().map(|&p| codeword[p]).collect()).expect("binary")
    }

    /// True when every parity check is satisfied.
    pub fn is_codeword(&self, bits: &[u8]) -> bool {
        bits.len() == self.n
            && self
                .check_vars
                .iter()
                .all(|vars| vars.iter().fold(0u8, |acc, &v| acc ^ bits[v]) == 0)
    }

    /// Normalized min-sum flooding decoder. Stops as soon as the hard
    /// decision satisfies all checks; `converged` is never set otherwise.
    pub fn decode<T: Scalar>(&self, llrs: &LlrBlock<T>, max_iters: usize) -> Result<DecodeOutcome> {
        if llrs.len() != self.n {
            return Err(Error::invalid(format!("expected {} LLRs, got {}", self.n, llrs.len())));
        }
        if max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        let channel = &llrs.0;
        let scale: T = lit(MIN_SUM_SCALE);
        // Edge e of check c lives at edge_start[c] + i; var_edges maps each
        // variable to its edge slots.
        let mut edge_start = Vec::with_capacity(self.check_vars.len() + 1);
        let mut edge_var = Vec::new();
        edge_start.push(0);
        for vars in &self.check_vars {
            edge_var.extend_from_slice(vars);
            edge_start.push(edge_var.len());
        }
        let mut var_edges: Vec<Vec<usize>> = vec![Vec::with_capacity(COLUMN_WEIGHT); self.n];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[v].push(e);
        }

        let mut v2c: Vec<T> = edge_var.iter().map(|&v| channel[v]).collect();
        let mut c2v: Vec<T> = vec![T::zero(); edge_var.len()];
        let mut hard = vec![0u8; self.n];

        for iter in 1..=max_iters {
            for c in 0..self.check_vars.len() {
                let edges = edge_start[c]..edge_start[c + 1];
                let mut min1 = T::infinity();
                let mut min2 = T::infinity();
                let mut argmin = usize::MAX;
                let mut negative = false;
                for e in edges.clone() {
                    let m = v2c[e];
                    negative ^= m < T::zero();
                    let a = m.abs();
                    if a < min1 {
                        min2 = min1;
                        min1 = a;
                        argmin = e;
                    } else if a < min2 {
                        min2 = a;
                    }
                }
                for e in edges {
                    let mag = if e == argmin { min2 } else { min1 };
                    let flip = negative ^ (v2c[e] < T::zero());
                    let val = scale * mag;
                    c2v[e] = if flip { -val } else { val };
                }
            }
            for v in 0..self.n {
                let total = var_edges[v].iter().fold(channel[v], |acc, &e| acc + c2v[e]);
                for &e in &var_edges[v] {
                    v2c[e] = total - c2v[e];
                }
                hard[v] = u8::from(total < T::zero());
            }
            if self.is_codeword(&hard) {
                return Ok(self.outcome(hard, true, iter));
            }
        }
        Ok(self.outcome(hard, false, max_iters))
    }

    fn outcome(&self, hard: Vec<u8>, converged: bool, iterations: usize) -> DecodeOutcome {
        DecodeOutcome {
            message: self.extract_message(&hard),
            codeword: BitStream::new(hard).expect("binary"),
            converged,
            iterations,
        }
    }
}

fn unpack(words: &[u64], n: usize) -> Vec<u8> {
    (0..n).map(|i| ((words[i / 64] >> (i % 64)) & 1) as u8).collect()
}

fn socket_graph(n: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let m = n / 2;
    let mut sockets: Vec<usize> = (0..m).flat_map(|c| std::iter::repeat_n(c, ROW_WEIGHT)).collect();
    sockets.shuffle(rng);
    debug_assert_eq!(sockets.len(), n * COLUMN_WEIGHT);

    let var_of = |s: usize| s / COLUMN_WEIGHT;
    let has_dup = |sockets: &[usize], v: usize| {
        let s = &sockets[v * COLUMN_WEIGHT..(v + 1) * COLUMN_WEIGHT];
        s[0] == s[1] || s[0] == s[2] || s[1] == s[2]
    };

    // Repeated edges: swap with random sockets until every variable has
    // three distinct checks.
    loop {
        let dups: Vec<usize> = (0..n).filter(|&v| has_dup(&sockets, v)).collect();
        if dups.is_empty() {
            break;
        }
        for v in dups {
            while has_dup(&sockets, v) {
                let a = v * COLUMN_WEIGHT + rng.random_range(0..COLUMN_WEIGHT);
                let b = rng.random_range(0..sockets.len());
                sockets.swap(a, b);
                if has_dup(&sockets, var_of(b)) {
                    sockets.swap(a, b);
                }
            }
        }
    }

    let mut var_checks: Vec<Vec<usize>> = sockets.chunks_exact(COLUMN_WEIGHT).map(|c| c.to_vec()).collect();
    remove_four_cycles(&mut var_checks, m, rng);
    for checks in &mut var_checks {
        checks.sort_unstable();
    }
    var_checks
}

fn var_in_cycle(v: usize, var_checks: &[Vec<usize>], check_vars: &[Vec<usize>]) -> bool {
    let checks = &var_checks[v];
    for (i, &c1) in checks.iter().enumerate() {
        for &c2 in &checks[i + 1..] {
            if check_vars[c1].iter().any(|&w| w != v && check_vars[c2].contains(&w)) {
                return true;
            }
        }
    }
    false
}

fn remove_four_cycles(var_checks: &mut [Vec<usize>], m: usize, rng: &mut impl Rng) {
    let n = var_checks.len();
    let mut check_vars = vec![Vec::with_capacity(ROW_WEIGHT); m];
    for (v, cs) in var_checks.iter().enumerate() {
        for &c in cs {
            check_vars[c].push(v);
        }
    }
    let mut tries = 0;
    loop {
        let bad: Vec<usize> = (0..n).filter(|&v| var_in_cycle(v, var_checks, &check_vars)).collect();
        if bad.is_empty() || tries >= CYCLE_REPAIR_TRIES {
            return;
        }
        let mut progress = false;
        for v in bad {
            if !var_in_cycle(v, var_checks, &check_vars) {
                continue;
            }
            for _ in 0..64 {
                tries += 1;
                let i = rng.random_range(0..COLUMN_WEIGHT);
                let u = rng.random_range(0..n);
                let j = rng.random_range(0..COLUMN_WEIGHT);
                let (cv, cu) = (var_checks[v][i], var_checks[u][j]);
                if u == v || cv == cu || var_checks[v].contains(&cu) || var_checks[u].contains(&cv) {
                    continue;
                }
                let before = usize::from(var_in_cycle(u, var_checks, &check_vars)) + 1;
                swap_edge(var_checks, &mut check_vars, v, i, u, j);
                let after = usize::from(var_in_cycle(v, var_checks, &check_vars))
                    + usize::from(var_in_cycle(u, var_checks, &check_vars));
                if after < before {
                    progress = true;
                    break;
                }
                swap_edge(var_checks, &mut check_vars, v, i, u, j);
            }
        }
        if !progress {
            return;
        }
    }
}

fn swap_edge(
    var_checks: &mut [Vec<usize>],
    check_vars: &mut [Vec<usize>],
    v: usize,
    i: usize,
    u: usize,
    j: usize,
) {
    let (cv, cu) = (var_checks[v][i], var_checks[u][j]);
    var_checks[v][i] = cu;
    var_checks[u][j] = cv;
    let pos = check_vars[cv].iter().position(|&x| x == v).expect("edge present");
    check_vars[cv][pos] = u;
    let pos = check_vars[cu].iter().position(|&x| x == u).expect("edge present");
    check_vars[cu][pos] = v;
}

fn count_four_cycles(var_checks: &[Vec<usize>], check_vars: &[Vec<usize>]) -> usize {
    let mut count = 0;
    for (v, checks) in var_checks.iter().enumerate() {
        let mut seen: Vec<usize> = Vec::new();
        for &c in checks {
            for &w in &check_vars[c] {
                if w > v {
                    if seen.contains(&w) {
                        count += 1;
                    } else {
                        seen.push(w);
                    }
                }
            }
        }
    }
    count
}

/// GF(2) elimination of `H` into reduced row-echelon form. Returns the
/// bit-packed systematic generator and the message (non-pivot) columns, or
/// `None` when `H` is rank deficient.
fn systematic_generator(check_vars: &[Vec<usize>], n: usize) -> Option<(Vec<Vec<u64>>, Vec<usize>)> {
    let words = n.div_ceil(64);
    let m = check_vars.len();
    let mut rows: Vec<Vec<u64>> = check_vars
        .iter()
        .map(|vars| {
            let mut r = vec![0u64; words];
            for &v in vars {
                r[v / 64] |= 1 << (v % 64);
            }
            r
        })
        .collect();
    let bit = |r: &[u64], c: usize| (r[c / 64] >> (c % 64)) & 1 == 1;

    let mut pivots = Vec::with_capacity(m);
    let mut r = 0;
    for col in 0..n {
        if r == m {
            break;
        }
        let Some(p) = (r..m).find(|&i| bit(&rows[i], col)) else { continue };
        rows.swap(r, p);
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && bit(row, col) {
                for (a, b) in row.iter_mut().zip(&pivot_row) {
                    *a ^= b;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    if pivots.len() < m {
        return None;
    }
    let mut is_pivot = vec![false; n];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let message_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let generator = message_positions
        .iter()
        .map(|&q| {
            let mut g = vec![0u64; words];
            g[q / 64] |= 1 << (q % 64);
            for (row, &p) in rows.iter().zip(&pivots) {
                if bit(row, q) {
                    g[p / 64] |= 1 << (p % 64);
                }
            }
            g
        })
        .collect();
    Some((generator, message_positions))
}
