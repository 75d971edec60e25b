//! Games, coalitions and preimputations.
//!
//! Coalitions are bitmasks over player indices (bit `i` is player `i`). A
//! [`Game`] stores `v(S)` densely for every nonempty `S`, indexed by
//! `mask - 1`. Everything downstream of this module assumes a normalized game,
//! i.e. `v(N) = 0`, so that the preimputations form the linear subspace
//! `X = {x : x(N) = 0}`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collections::least_core;
use crate::error::{Error, Result};

pub const MAX_PLAYERS: usize = 24;
pub const SOFT_MAX_PLAYERS: usize = 16;
pub const EFFICIENCY_TOL: f64 = 1e-9;
const NORMALIZED_TOL: f64 = 1e-12;

/// A nonempty set of players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coalition(u32);

impl Coalition {
    pub fn new(mask: u32, n: usize) -> Result<Self> {
        if mask == 0 || (n < 32 && mask >> n != 0) {
            return Err(Error::InvalidCoalition { mask, n });
        }
        Ok(Coalition(mask))
    }

    pub fn from_players(players: &[usize], n: usize) -> Result<Self> {
        let mut mask = 0u32;
        for &p in players {
            if p >= n {
                return Err(Error::InvalidCoalition { mask: 1 << p.min(31), n });
            }
            mask |= 1 << p;
        }
        Coalition::new(mask, n)
    }

    pub fn grand(n: usize) -> Self {
        Coalition(grand_mask(n))
    }

    #[inline]
    pub fn mask(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn contains(self, player: usize) -> bool {
        self.0 >> player & 1 == 1
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    /// `N \ S`, or `None` when `S = N`.
    pub fn complement(self, n: usize) -> Option<Coalition> {
        let c = grand_mask(n) & !self.0;
        (c != 0).then_some(Coalition(c))
    }

    pub fn players(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..32).filter(move |i| mask >> i & 1 == 1)
    }

    /// Label such as `a+b` using default letters or supplied names.
    pub fn label(self, names: Option<&[String]>) -> String {
        self.players()
            .map(|i| match names {
                Some(names) => names[i].clone(),
                None => default_player_name(i),
            })
            .collect::<Vec<_>>()
            .join("+")
    }
}

pub fn default_player_name(i: usize) -> String {
    if i < 26 {
        ((b'a' + i as u8) as char).to_string()
    } else {
        format!("p{i}")
    }
}

#[inline]
pub fn grand_mask(n: usize) -> u32 {
    if n >= 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

/// Masks of every proper nonempty coalition, ascending.
pub fn proper_masks(n: usize) -> impl Iterator<Item = u32> {
    1..grand_mask(n)
}

/// `x(S)` for every mask `0..2^n`, by the lowest-bit recurrence.
pub fn subset_sums(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut sums = vec![0.0; 1 << n];
    for mask in 1usize..1 << n {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + x[low];
    }
    sums
}

/// A TU game with a dense coalition-function table.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    n: usize,
    names: Option<Vec<String>>,
    values: Vec<f64>,
    normalized: bool,
}

impl Game {
    /// Builds a game from `v(S)` for masks `1..2^n` (entry `k` holds mask `k + 1`).
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if !(2..=MAX_PLAYERS).contains(&n) {
            return Err(Error::PlayerCount(n));
        }
        let expected = grand_mask(n) as usize;
        if values.len() != expected {
            return Err(Error::TableLength { expected, got: values.len() });
        }
        let normalized = values[expected - 1].abs() <= NORMALIZED_TOL;
        Ok(Game { n, names: None, values, normalized })
    }

    pub fn from_fn(n: usize, f: impl Fn(Coalition) -> f64) -> Result<Self> {
        if !(2..=MAX_PLAYERS).contains(&n) {
            return Err(Error::PlayerCount(n));
        }
        let values = (1..=grand_mask(n)).map(|m| f(Coalition(m))).collect();
        Game::new(n, values)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: names.len() });
        }
        self.names = Some(names);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn player_name(&self, i: usize) -> String {
        match &self.names {
            Some(names) => names[i].clone(),
            None => default_player_name(i),
        }
    }

    #[inline]
    pub fn value(&self, s: Coalition) -> f64 {
        self.values[s.0 as usize - 1]
    }

    #[inline]
    pub fn value_of_mask(&self, mask: u32) -> f64 {
        self.values[mask as usize - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grand_value(&self) -> f64 {
        *self.values.last().expect("table is never empty")
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::NotNormalized(self.grand_value()))
        }
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.n, got: len })
        }
    }

    /// `v'(S) = v(S) - (s/n) v(N)`, after which `v'(N) = 0` exactly.
    pub fn normalize(&self) -> Game {
        if self.normalized && self.grand_value() == 0.0 {
            return self.clone();
        }
        let vn = self.grand_value();
        let n = self.n as f64;
        let full = grand_mask(self.n);
        let values = (1..=full)
            .map(|m| {
                if m == full {
                    0.0
                } else {
                    self.values[m as usize - 1] - (m.count_ones() as f64 / n) * vn
                }
            })
            .collect();
        Game { n: self.n, names: self.names.clone(), values, normalized: true }
    }

    /// `e_S(x) = v(S) - x(S)`.
    pub fn excess(&self, s: Coalition, x: &Preimputation) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.value(s) - payment(s, x)?)
    }

    /// Excess of every mask `1..2^n`; index `mask - 1`.
    pub fn excesses(&self, x: &[f64]) -> Vec<f64> {
        let sums = subset_sums(x);
        self.values.iter().zip(&sums[1..]).map(|(v, s)| v - s).collect()
    }
}

/// A payoff vector on the hyperplane `x(N) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preimputation {
    x: Vec<f64>,
    tol: f64,
}

impl Preimputation {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(x, EFFICIENCY_TOL)
    }

    pub fn with_tolerance(x: Vec<f64>, tol: f64) -> Result<Self> {
        let sum: f64 = x.iter().sum();
        if !(sum.abs() <= tol) {
            return Err(Error::NotEfficient { sum, tol });
        }
        Ok(Preimputation { x, tol })
    }

    pub fn zero(n: usize) -> Self {
        Preimputation { x: vec![0.0; n], tol: EFFICIENCY_TOL }
    }

    /// Wraps a vector already known to lie in X, subtracting its mean to
    /// remove accumulated drift.
    pub(crate) fn from_recentered(mut x: Vec<f64>) -> Self {
        recenter(&mut x);
        Preimputation { x, tol: EFFICIENCY_TOL }
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn dot(&self, other: &Preimputation) -> f64 {
        dot(&self.x, &other.x)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.x)
    }
}

impl std::ops::Index<usize> for Preimputation {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.x[i]
    }
}

impl fmt::Display for Preimputation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.x.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A set of distinct coalitions, optionally with positive balancing weights.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct CoalitionCollection {
    members: Vec<Coalition>,
}

impl CoalitionCollection {
    pub fn new(mut members: Vec<Coalition>) -> Result<Self> {
        members.sort();
        for w in members.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateCoalition(w[0].0));
            }
        }
        Ok(CoalitionCollection { members })
    }

    pub fn from_masks(masks: &[u32], n: usize) -> Result<Self> {
        let members = masks.iter().map(|&m| Coalition::new(m, n)).collect::<Result<_>>()?;
        Self::new(members)
    }

    pub(crate) fn from_sorted_unchecked(members: Vec<Coalition>) -> Self {
        CoalitionCollection { members }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn members(&self) -> &[Coalition] {
        &self.members
    }

    pub fn masks(&self) -> Vec<u32> {
        self.members.iter().map(|c| c.0).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, s: Coalition) -> bool {
        self.members.binary_search(&s).is_ok()
    }

    /// FNV-1a over the sorted masks; stable across runs and platforms.
    pub fn region_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in &self.members {
            for b in c.0.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn label(&self, names: Option<&[String]>) -> String {
        if self.members.is_empty() {
            return "{}".into();
        }
        self.members.iter().map(|c| c.label(names)).collect::<Vec<_>>().join("|")
    }
}

/// A collection together with balancing weights `lambda_S > 0` such that
/// `sum lambda_S 1^S = 1^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCollection {
    collection: CoalitionCollection,
    weights: Vec<f64>,
}

impl WeightedCollection {
    pub fn new(collection: CoalitionCollection, weights: Vec<f64>, n: usize) -> Result<Self> {
        if weights.len() != collection.len() {
            return Err(Error::Dimension { expected: collection.len(), got: weights.len() });
        }
        for (c, &w) in collection.members().iter().zip(&weights) {
            if !(w > 0.0) {
                return Err(Error::NonPositiveWeight { mask: c.0, weight: w });
            }
        }
        let residual = balance_residual(&collection, &weights, n);
        if residual > 1e-9 {
            return Err(Error::Unbalanced(residual));
        }
        Ok(WeightedCollection { collection, weights })
    }

    pub fn collection(&self) -> &CoalitionCollection {
        &self.collection
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `max_i |sum_S lambda_S 1^S_i - 1|`.
pub fn balance_residual(coll: &CoalitionCollection, weights: &[f64], n: usize) -> f64 {
    let mut cover = vec![0.0; n];
    for (c, w) in coll.members().iter().zip(weights) {
        for i in c.players().take_while(|&i| i < n) {
            cover[i] += w;
        }
    }
    cover.iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max)
}

/// `eta^S = 1^S - (s/n) 1^N`, the projection of the indicator of `S` onto X.
pub fn eta(s: Coalition, n: usize) -> Preimputation {
    Preimputation { x: eta_vec(s.mask(), n), tol: EFFICIENCY_TOL }
}

pub(crate) fn eta_vec(mask: u32, n: usize) -> Vec<f64> {
    let share = mask.count_ones() as f64 / n as f64;
    (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 - share } else { -share }).collect()
}

/// `||eta^S||^2 = s (n - s) / n`.
#[inline]
pub fn eta_norm_sq(mask: u32, n: usize) -> f64 {
    let s = mask.count_ones() as f64;
    s * (n as f64 - s) / n as f64
}

/// `x(S) = sum_{i in S} x_i`.
pub fn payment(s: Coalition, x: &Preimputation) -> Result<f64> {
    if s.mask() > grand_mask(x.len()) {
        return Err(Error::Dimension { expected: 32 - s.mask().leading_zeros() as usize, got: x.len() });
    }
    Ok(s.players().map(|i| x.x[i]).sum())
}

/// Orthogonal projection of `w` onto X.
pub fn project_to_x(w: &[f64]) -> Preimputation {
    Preimputation::from_recentered(w.to_vec())
}

pub(crate) fn recenter(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal (Helmert) basis of X: `u_k = (1, .., 1, -k, 0, ..) / sqrt(k (k+1))`
/// with `k` leading ones, for `k = 1..n-1`. For `n = 3` the first two vectors
/// are `(1,-1,0)/sqrt2` and `(1,1,-2)/sqrt6` up to the sign of the first.
pub fn plane_basis(n: usize) -> Vec<Vec<f64>> {
    (1..n)
        .map(|k| {
            let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
            (0..n)
                .map(|i| match i.cmp(&k) {
                    std::cmp::Ordering::Less => scale,
                    std::cmp::Ordering::Equal => -(k as f64) * scale,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect()
        })
        .collect()
}

/// `v(S) = c * s * (n - s)`; balanced whenever `c <= 0`.
pub fn gen_symmetric(n: usize, c: f64) -> Result<Game> {
    Game::from_fn(n, |s| {
        let k = s.size() as f64;
        c * k * (n as f64 - k)
    })
}

const RANDOM_RETRIES: usize = 64;

/// Seeded random normalized game. Balanced games are built around a hidden
/// core point; unbalanced ones additionally lift a random partition so that its
/// weighted worth exceeds `v(N)`. The intended core status is confirmed with
/// the least-core LP before returning.
pub fn gen_random(n: usize, seed: u64, balanced: bool) -> Result<Game> {
    if !(2..=MAX_PLAYERS).contains(&n) {
        return Err(Error::PlayerCount(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_RETRIES {
        let center: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let center = project_to_x(&center);
        let sums = subset_sums(center.as_slice());
        let full = grand_mask(n);
        let mut values: Vec<f64> = (1..=full)
            .map(|m| if m == full { 0.0 } else { sums[m as usize] - rng.gen_range(0.0..3.0) })
            .collect();
        if !balanced {
            let blocks = random_partition(n, &mut rng);
            let worth: f64 = blocks.iter().map(|&m| values[m as usize - 1]).sum();
            let margin = rng.gen_range(0.5..2.0);
            let lift = (margin - worth) / blocks.len() as f64;
            for &m in &blocks {
                values[m as usize - 1] += lift;
            }
        }
        let game = Game::new(n, values)?;
        let (eps, _) = least_core(&game)?;
        if (eps <= 1e-9) == balanced {
            return Ok(game);
        }
    }
    Err(Error::RetryBudget(RANDOM_RETRIES))
}

/// Random partition of the players into at least two blocks.
fn random_partition(n: usize, rng: &mut impl Rng) -> Vec<u32> {
    loop {
        let k = rng.gen_range(2..=n);
        let mut blocks = vec![0u32; k];
        for i in 0..n {
            blocks[rng.gen_range(0..k)] |= 1 << i;
        }
        blocks.retain(|&b| b != 0);
        if blocks.len() >= 2 {
            return blocks;
        }
    }
}
