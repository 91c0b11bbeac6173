//! A small Graph Isomorphism Network engine with hand-written gradients.
//!
//! A GIN layer computes `MLP((1 + ε)·h_v + Σ_{u ∈ N(v)} h_u)` where the MLP is
//! `affine → ReLU → affine`. An expander layer runs two such steps over a
//! bipartite expander: hyperedge nodes first aggregate their left neighbours
//! (a GIN step in learned mode, a sum followed by an affine map in summation
//! mode), then left nodes aggregate the updated hyperedge nodes.
//!
//! Examples are batched as a disjoint union, so one layer is a few dense
//! products over all rows of the batch. Hyperedge rows start at zero in every
//! forward pass.

use std::borrow::Borrow;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::construct::{mix_seed, rng_from_seed, GeneratorConfig};
use crate::error::{Error, Result};
use crate::graph::{families, BipartiteExpander, Graph};
use crate::rewire::{self, LayerKind, RewiredInstance};
use crate::scalar::Scalar;

/// Node features, one row per node.
pub type FeatureMatrix<T> = Array2<T>;

fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// `y = x·W + b` with `W` of shape `d_in × d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Affine<T> {
    pub fn new(weight: Array2<T>, bias: Array1<T>) -> Result<Self> {
        if weight.ncols() != bias.len() {
            return Err(Error::Dimension(format!(
                "weight has {} columns, bias has {} entries",
                weight.ncols(),
                bias.len()
            )));
        }
        Ok(Affine { weight, bias })
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Affine {
            weight: Array2::zeros((d_in, d_out)),
            bias: Array1::zeros(d_out),
        }
    }

    pub fn identity(d: usize) -> Self {
        Affine {
            weight: Array2::eye(d),
            bias: Array1::zeros(d),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (d_in + d_out).max(1) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((d_in, d_out), || T::of(rng.random_range(-a..=a)));
        Affine {
            weight,
            bias: Array1::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.ncols()
    }

    pub fn apply(&self, x: &Array2<T>) -> Array2<T> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates parameter gradients into `grad`; returns `∂L/∂x`.
    fn backward(&self, x: &Array2<T>, dy: &Array2<T>, grad: &mut Affine<T>) -> Array2<T> {
        grad.weight += &x.t().dot(dy);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }

    fn collect(&self, out: &mut Vec<T>) {
        out.extend(self.weight.iter().copied());
        out.extend(self.bias.iter().copied());
    }

    fn assign(&mut self, it: &mut dyn Iterator<Item = T>) {
        for x in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            *x = it.next().expect("parameter vector too short");
        }
    }
}

/// ε and the two affine maps of one GIN MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct GinLayerParams<T> {
    pub epsilon: T,
    pub lin1: Affine<T>,
    pub lin2: Affine<T>,
}

impl<T: Scalar> GinLayerParams<T> {
    pub fn new(epsilon: T, lin1: Affine<T>, lin2: Affine<T>) -> Result<Self> {
        if lin1.d_out() != lin2.d_in() {
            return Err(Error::Dimension(format!(
                "MLP hidden widths differ: {} vs {}",
                lin1.d_out(),
                lin2.d_in()
            )));
        }
        Ok(GinLayerParams { epsilon, lin1, lin2 })
    }

    /// ε = 0 and identity maps. The MLP is the identity on non-negative input.
    pub fn identity(d: usize) -> Self {
        GinLayerParams {
            epsilon: T::zero(),
            lin1: Affine::identity(d),
            lin2: Affine::identity(d),
        }
    }

    pub fn glorot<R: Rng + ?Sized>(d_in: usize, hidden: usize, d_out: usize, rng: &mut R) -> Self {
        let lin1 = Affine::glorot(d_in, hidden, rng);
        let lin2 = Affine::glorot(hidden, d_out, rng);
        GinLayerParams {
            epsilon: T::zero(),
            lin1,
            lin2,
        }
    }

    pub fn d_in(&self) -> usize {
        self.lin1.d_in()
    }

    pub fn d_out(&self) -> usize {
        self.lin2.d_out()
    }

    /// Returns the pre-activation of the hidden layer and the output.
    fn mlp(&self, z: &Array2<T>) -> (Array2<T>, Array2<T>) {
        let a1 = self.lin1.apply(z);
        let out = self.lin2.apply(&a1.mapv(relu));
        (a1, out)
    }

    fn mlp_backward(&self, z: &Array2<T>, a1: &Array2<T>, dout: &Array2<T>, grad: &mut Self) -> Array2<T> {
        let dr = self.lin2.backward(&a1.mapv(relu), dout, &mut grad.lin2);
        let da1 = ndarray::Zip::from(&dr)
            .and(a1)
            .map_collect(|&d, &a| if a > T::zero() { d } else { T::zero() });
        self.lin1.backward(z, &da1, &mut grad.lin1)
    }

    fn collect(&self, out: &mut Vec<T>) {
        out.push(self.epsilon);
        self.lin1.collect(out);
        self.lin2.collect(out);
    }

    fn assign(&mut self, it: &mut dyn Iterator<Item = T>) {
        self.epsilon = it.next().expect("parameter vector too short");
        self.lin1.assign(it);
        self.lin2.assign(it);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HyperedgeMode {
    /// Hyperedge nodes run their own GIN step and keep their state between
    /// expander layers of one forward pass.
    Learned,
    /// Hyperedge features are an affine map of the sum of their left
    /// neighbours, recomputed in every expander layer.
    Summation,
}

/// Phase-one parameters of an expander layer.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperedgeUpdate<T> {
    Learned(GinLayerParams<T>),
    Summation(Affine<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpanderLayerParams<T> {
    pub hyperedge: HyperedgeUpdate<T>,
    pub backward_gin: GinLayerParams<T>,
}

impl<T: Scalar> ExpanderLayerParams<T> {
    /// Both phases must map `d → d`: hyperedge rows keep their phase-one
    /// output and share the feature matrix with the left rows.
    pub fn new(hyperedge: HyperedgeUpdate<T>, backward_gin: GinLayerParams<T>) -> Result<Self> {
        let d = backward_gin.d_in();
        let (h_in, h_out) = match &hyperedge {
            HyperedgeUpdate::Learned(p) => (p.d_in(), p.d_out()),
            HyperedgeUpdate::Summation(a) => (a.d_in(), a.d_out()),
        };
        if backward_gin.d_out() != d || h_in != d || h_out != d {
            return Err(Error::Dimension(format!(
                "expander layer needs square maps, got hyperedge {h_in}->{h_out} and left {d}->{}",
                backward_gin.d_out()
            )));
        }
        Ok(ExpanderLayerParams {
            hyperedge,
            backward_gin,
        })
    }

    pub fn identity(d: usize, mode: HyperedgeMode) -> Self {
        let hyperedge = match mode {
            HyperedgeMode::Learned => HyperedgeUpdate::Learned(GinLayerParams::identity(d)),
            HyperedgeMode::Summation => HyperedgeUpdate::Summation(Affine::identity(d)),
        };
        ExpanderLayerParams {
            hyperedge,
            backward_gin: GinLayerParams::identity(d),
        }
    }

    pub fn glorot<R: Rng + ?Sized>(d: usize, mode: HyperedgeMode, rng: &mut R) -> Self {
        let hyperedge = match mode {
            HyperedgeMode::Learned => HyperedgeUpdate::Learned(GinLayerParams::glorot(d, d, d, rng)),
            HyperedgeMode::Summation => HyperedgeUpdate::Summation(Affine::glorot(d, d, rng)),
        };
        ExpanderLayerParams {
            hyperedge,
            backward_gin: GinLayerParams::glorot(d, d, d, rng),
        }
    }

    pub fn mode(&self) -> HyperedgeMode {
        match self.hyperedge {
            HyperedgeUpdate::Learned(_) => HyperedgeMode::Learned,
            HyperedgeUpdate::Summation(_) => HyperedgeMode::Summation,
        }
    }

    pub fn dim(&self) -> usize {
        self.backward_gin.d_in()
    }

    fn collect(&self, out: &mut Vec<T>) {
        match &self.hyperedge {
            HyperedgeUpdate::Learned(p) => p.collect(out),
            HyperedgeUpdate::Summation(a) => a.collect(out),
        }
        self.backward_gin.collect(out);
    }

    fn assign(&mut self, it: &mut dyn Iterator<Item = T>) {
        match &mut self.hyperedge {
            HyperedgeUpdate::Learned(p) => p.assign(it),
            HyperedgeUpdate::Summation(a) => a.assign(it),
        }
        self.backward_gin.assign(it);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Original(GinLayerParams<T>),
    Expander(ExpanderLayerParams<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Original(_) => LayerKind::Original,
            Layer::Expander(_) => LayerKind::Expander,
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            Layer::Original(p) => (p.d_in(), p.d_out()),
            Layer::Expander(p) => (p.dim(), p.dim()),
        }
    }
}

/// Stack of layers followed by an affine classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct GinModel<T> {
    layers: Vec<Layer<T>>,
    head: Affine<T>,
}

impl<T: Scalar> GinModel<T> {
    pub fn new(layers: Vec<Layer<T>>, head: Affine<T>) -> Result<Self> {
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].dims().1 != w[1].dims().0 {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} features, layer {} expects {}",
                    w[0].dims().1,
                    i + 1,
                    w[1].dims().0
                )));
            }
        }
        if let Some(last) = layers.last() {
            if last.dims().1 != head.d_in() {
                return Err(Error::Dimension(format!(
                    "last layer outputs {} features, classifier expects {}",
                    last.dims().1,
                    head.d_in()
                )));
            }
        }
        Ok(GinModel { layers, head })
    }

    /// Random initialisation following `schedule`. The first layer maps
    /// `d_in → hidden`; an expander layer in first position therefore needs
    /// `d_in == hidden`.
    pub fn init<R: Rng + ?Sized>(
        schedule: &[LayerKind],
        mode: HyperedgeMode,
        d_in: usize,
        hidden: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(schedule.len());
        let mut d = d_in;
        for &kind in schedule {
            layers.push(match kind {
                LayerKind::Original => Layer::Original(GinLayerParams::glorot(d, hidden, hidden, rng)),
                LayerKind::Expander => {
                    if d != hidden {
                        return Err(Error::Dimension(format!(
                            "expander layer cannot map {d} to {hidden} features"
                        )));
                    }
                    Layer::Expander(ExpanderLayerParams::glorot(hidden, mode, rng))
                }
            });
            d = hidden;
        }
        let head = Affine::glorot(d, classes, rng);
        GinModel::new(layers, head)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn head(&self) -> &Affine<T> {
        &self.head
    }

    pub fn schedule(&self) -> Vec<LayerKind> {
        self.layers.iter().map(Layer::kind).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(self.head.d_in(), |l| l.dims().0)
    }

    pub fn num_classes(&self) -> usize {
        self.head.d_out()
    }

    /// All parameters in a fixed order: per layer ε then weights then bias of
    /// each affine map (phase one before phase two), classifier last.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Original(p) => p.collect(&mut out),
                Layer::Expander(p) => p.collect(&mut out),
            }
        }
        self.head.collect(&mut out);
        out
    }

    pub fn set_params(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "model has {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            match layer {
                Layer::Original(p) => p.assign(&mut it),
                Layer::Expander(p) => p.assign(&mut it),
            }
        }
        self.head.assign(&mut it);
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.set_params(&vec![T::zero(); self.param_count()]).unwrap();
        g
    }

    /// Flat parameter dump: `{"parameter_count": N, "params": [...]}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump {
            parameter_count: usize,
            schedule: Vec<LayerKind>,
            params: Vec<f64>,
        }
        let params: Vec<f64> = self.params().into_iter().map(Scalar::as_f64).collect();
        crate::json::to_compact(&Dump {
            parameter_count: params.len(),
            schedule: self.schedule(),
            params,
        })
    }
}

fn check_finite<T: Scalar>(h: &Array2<T>, layer: usize) -> Result<()> {
    if h.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer })
    }
}

fn row<T>(m: &[T], d: usize, i: usize) -> &[T] {
    &m[i * d..(i + 1) * d]
}

fn add_scaled<T: Scalar>(dst: &mut [T], alpha: T, src: &[T]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += alpha * b;
    }
}

fn add<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

fn contiguous<T: Scalar>(m: &Array2<T>) -> &[T] {
    m.as_slice().expect("feature matrices are kept in standard layout")
}

/// Row `i` of the result is `(1 + ε)·own[rows[i]] + Σ_{u ∈ adj[rows[i]]} src[u]`;
/// the self term is dropped when `own` is `None`.
fn aggregate<T: Scalar>(rows: &[usize], adj: &[Vec<usize>], src: &Array2<T>, own: Option<(&Array2<T>, T)>) -> Array2<T> {
    let d = src.ncols();
    let s = contiguous(src);
    let own = own.map(|(h, eps)| (contiguous(h), T::one() + eps));
    let mut z = vec![T::zero(); rows.len() * d];
    for (zi, &v) in z.chunks_exact_mut(d.max(1)).zip(rows) {
        if let Some((h, scale)) = own {
            add_scaled(zi, scale, row(h, d, v));
        }
        for &u in &adj[v] {
            add(zi, row(s, d, u));
        }
    }
    Array2::from_shape_vec((rows.len(), d), z).unwrap()
}

fn scatter_neighbors<T: Scalar>(rows: &[usize], adj: &[Vec<usize>], dz: &Array2<T>, d_src: &mut Array2<T>) {
    let d = dz.ncols();
    let g = contiguous(dz);
    let out = d_src.as_slice_mut().expect("standard layout");
    for (i, &v) in rows.iter().enumerate() {
        for &u in &adj[v] {
            add(&mut out[u * d..(u + 1) * d], row(g, d, i));
        }
    }
}

/// Gradient of the `(1 + ε)·h_v` term; returns `∂L/∂ε`.
fn self_term_backward<T: Scalar>(rows: &[usize], h: &Array2<T>, eps: T, dz: &Array2<T>, dh: &mut Array2<T>) -> T {
    let d = dz.ncols();
    let (hs, g) = (contiguous(h), contiguous(dz));
    let out = dh.as_slice_mut().expect("standard layout");
    let mut deps = T::zero();
    for (i, &v) in rows.iter().enumerate() {
        let gi = row(g, d, i);
        add_scaled(&mut out[v * d..(v + 1) * d], T::one() + eps, gi);
        deps += gi.iter().zip(row(hs, d, v)).map(|(&a, &b)| a * b).sum::<T>();
    }
    deps
}

fn gather<T: Scalar>(h: &Array2<T>, rows: &[usize]) -> Array2<T> {
    h.select(Axis(0), rows)
}

/// Row layout of a batch of examples laid side by side.
#[derive(Debug, Clone)]
struct Layout {
    all: Vec<usize>,
    original: Vec<Vec<usize>>,
    expander: Vec<Vec<usize>>,
    left: Vec<usize>,
    hyper: Vec<usize>,
}

enum LayerCache<T> {
    Original {
        z: Array2<T>,
        a1: Array2<T>,
    },
    Expander {
        z1: Array2<T>,
        a1_hyper: Option<Array2<T>>,
        z2: Array2<T>,
        a1_left: Array2<T>,
    },
}

fn original_forward<T: Scalar>(h: &Array2<T>, layout: &Layout, p: &GinLayerParams<T>) -> (Array2<T>, LayerCache<T>) {
    let z = aggregate(&layout.all, &layout.original, h, Some((h, p.epsilon)));
    let (a1, out) = p.mlp(&z);
    (out, LayerCache::Original { z, a1 })
}

fn expander_forward<T: Scalar>(h: &Array2<T>, layout: &Layout, p: &ExpanderLayerParams<T>) -> (Array2<T>, LayerCache<T>) {
    let adj = &layout.expander;
    let (z1, a1_hyper, h1) = match &p.hyperedge {
        HyperedgeUpdate::Learned(f) => {
            let z1 = aggregate(&layout.hyper, adj, h, Some((h, f.epsilon)));
            let (a1, h1) = f.mlp(&z1);
            (z1, Some(a1), h1)
        }
        HyperedgeUpdate::Summation(lin) => {
            let z1 = aggregate(&layout.hyper, adj, h, None);
            let h1 = lin.apply(&z1);
            (z1, None, h1)
        }
    };
    let mut out = h.clone();
    for (i, &v) in layout.hyper.iter().enumerate() {
        out.row_mut(v).assign(&h1.row(i));
    }
    let z2 = aggregate(&layout.left, adj, &out, Some((h, p.backward_gin.epsilon)));
    let (a1_left, left) = p.backward_gin.mlp(&z2);
    for (i, &v) in layout.left.iter().enumerate() {
        out.row_mut(v).assign(&left.row(i));
    }
    (
        out,
        LayerCache::Expander {
            z1,
            a1_hyper,
            z2,
            a1_left,
        },
    )
}

fn original_backward<T: Scalar>(
    h: &Array2<T>,
    layout: &Layout,
    p: &GinLayerParams<T>,
    cache: (&Array2<T>, &Array2<T>),
    dout: &Array2<T>,
    grad: &mut GinLayerParams<T>,
) -> Array2<T> {
    let (z, a1) = cache;
    let dz = p.mlp_backward(z, a1, dout, grad);
    let mut dh = Array2::zeros(h.raw_dim());
    grad.epsilon += self_term_backward(&layout.all, h, p.epsilon, &dz, &mut dh);
    scatter_neighbors(&layout.all, &layout.original, &dz, &mut dh);
    dh
}

fn expander_backward<T: Scalar>(
    h: &Array2<T>,
    layout: &Layout,
    p: &ExpanderLayerParams<T>,
    cache: &LayerCache<T>,
    dout: &Array2<T>,
    grad: &mut ExpanderLayerParams<T>,
) -> Array2<T> {
    let LayerCache::Expander {
        z1,
        a1_hyper,
        z2,
        a1_left,
    } = cache
    else {
        unreachable!("cache kind follows layer kind")
    };
    let adj = &layout.expander;
    let mut dh = Array2::zeros(h.raw_dim());

    // Phase two: left rows.
    let d_left = gather(dout, &layout.left);
    let dz2 = p.backward_gin.mlp_backward(z2, a1_left, &d_left, &mut grad.backward_gin);
    grad.backward_gin.epsilon += self_term_backward(&layout.left, h, p.backward_gin.epsilon, &dz2, &mut dh);
    let mut dmid = dout.clone();
    scatter_neighbors(&layout.left, adj, &dz2, &mut dmid);

    // Phase one: hyperedge rows, reached directly and through phase two.
    let dh1 = gather(&dmid, &layout.hyper);
    let dz1 = match (&p.hyperedge, &mut grad.hyperedge) {
        (HyperedgeUpdate::Learned(f), HyperedgeUpdate::Learned(gf)) => {
            let a1 = a1_hyper.as_ref().expect("learned mode caches its MLP");
            let dz1 = f.mlp_backward(z1, a1, &dh1, gf);
            gf.epsilon += self_term_backward(&layout.hyper, h, f.epsilon, &dz1, &mut dh);
            dz1
        }
        (HyperedgeUpdate::Summation(lin), HyperedgeUpdate::Summation(gl)) => lin.backward(z1, &dh1, gl),
        _ => unreachable!("gradient mirrors the model"),
    };
    scatter_neighbors(&layout.hyper, adj, &dz1, &mut dh);
    dh
}

/// One GIN layer on a plain graph.
pub fn gin_layer_forward<T: Scalar>(h: &FeatureMatrix<T>, g: &Graph, p: &GinLayerParams<T>) -> Result<FeatureMatrix<T>> {
    if h.nrows() != g.n() || h.ncols() != p.d_in() {
        return Err(Error::Dimension(format!(
            "features are {}x{}, graph has {} nodes and the layer expects {} features",
            h.nrows(),
            h.ncols(),
            g.n(),
            p.d_in()
        )));
    }
    let h = h.as_standard_layout().into_owned();
    let all: Vec<usize> = (0..g.n()).collect();
    let z = aggregate(&all, g.adjacency(), &h, Some((&h, p.epsilon)));
    Ok(p.mlp(&z).1)
}

/// One two-phase expander layer. Rows `0..n` are the left (original) nodes
/// and rows `n..2n` the hyperedge nodes.
pub fn expander_layer_forward<T: Scalar>(
    h: &FeatureMatrix<T>,
    b: &BipartiteExpander,
    p: &ExpanderLayerParams<T>,
) -> Result<FeatureMatrix<T>> {
    let n = b.n_left();
    if h.nrows() != 2 * n || h.ncols() != p.dim() {
        return Err(Error::Dimension(format!(
            "features are {}x{}, expected {}x{}",
            h.nrows(),
            h.ncols(),
            2 * n,
            p.dim()
        )));
    }
    let layout = Layout {
        all: (0..2 * n).collect(),
        original: vec![Vec::new(); 2 * n],
        expander: b.graph().adjacency().to_vec(),
        left: (0..n).collect(),
        hyper: (n..2 * n).collect(),
    };
    Ok(expander_forward(&h.as_standard_layout().into_owned(), &layout, p).0)
}

/// Mean of the rows whose mask entry is `false`.
pub fn masked_mean_pool<T: Scalar>(h: &FeatureMatrix<T>, mask: &[bool]) -> Result<Array1<T>> {
    if mask.len() != h.nrows() {
        return Err(Error::Dimension(format!("{} mask entries for {} rows", mask.len(), h.nrows())));
    }
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::AllMasked);
    }
    Ok(gather(h, &rows).sum_axis(Axis(0)).mapv(|x| x / T::of_usize(rows.len())))
}

/// The graph a model runs on.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Plain(Graph),
    Rewired(RewiredInstance),
}

impl Topology {
    /// Number of original nodes.
    pub fn n(&self) -> usize {
        match self {
            Topology::Plain(g) => g.n(),
            Topology::Rewired(r) => r.n(),
        }
    }

    pub fn total_nodes(&self) -> usize {
        match self {
            Topology::Plain(g) => g.n(),
            Topology::Rewired(r) => r.total_nodes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Representation of one original node (node-level tasks).
    Node(usize),
    /// Mean over the original nodes; hyperedge nodes are ignored.
    MeanPool,
}

/// Input features cover the original nodes only; hyperedge rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub topology: Topology,
    pub features: FeatureMatrix<T>,
    pub readout: Readout,
    pub label: usize,
}

/// Examples compiled into one disjoint-union batch.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    layout: Layout,
    features: Array2<T>,
    readout: Vec<Vec<usize>>,
    labels: Vec<usize>,
    schedule: Option<Vec<LayerKind>>,
}

impl<T: Scalar> Batch<T> {
    pub fn new<E: Borrow<Example<T>>>(examples: &[E]) -> Result<Self> {
        let examples: Vec<&Example<T>> = examples.iter().map(Borrow::borrow).collect();
        let Some(first) = examples.first() else {
            return Err(Error::InvalidArgument("empty batch".into()));
        };
        let d = first.features.ncols();
        let rows: usize = examples.iter().map(|e| e.topology.total_nodes()).sum();
        let rewired = matches!(first.topology, Topology::Rewired(_));
        let schedule = match &first.topology {
            Topology::Rewired(r) => Some(r.schedule().to_vec()),
            Topology::Plain(_) => None,
        };
        let mut layout = Layout {
            all: (0..rows).collect(),
            original: vec![Vec::new(); rows],
            expander: vec![Vec::new(); rows],
            left: Vec::new(),
            hyper: Vec::new(),
        };
        let mut features = Array2::zeros((rows, d));
        let mut readout = Vec::with_capacity(examples.len());
        let mut offset = 0;
        for (i, e) in examples.iter().enumerate() {
            let n = e.topology.n();
            if e.features.nrows() != n || e.features.ncols() != d {
                return Err(Error::Dimension(format!(
                    "example {i}: features are {}x{}, expected {n}x{d}",
                    e.features.nrows(),
                    e.features.ncols()
                )));
            }
            let (g, b) = match &e.topology {
                Topology::Plain(g) if !rewired => (g, None),
                Topology::Rewired(r) if rewired && Some(r.schedule()) == schedule.as_deref() => {
                    (r.original(), Some(r.expander()))
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "example {i} does not share the topology kind and schedule of the batch"
                    )))
                }
            };
            for v in 0..n {
                layout.original[offset + v] = g.neighbors(v).iter().map(|u| offset + u).collect();
            }
            layout.left.extend(offset..offset + n);
            if let Some(b) = b {
                let bg = b.graph();
                for v in 0..2 * n {
                    layout.expander[offset + v] = bg.neighbors(v).iter().map(|u| offset + u).collect();
                }
                layout.hyper.extend(offset + n..offset + 2 * n);
            }
            features.slice_mut(ndarray::s![offset..offset + n, ..]).assign(&e.features);
            readout.push(match e.readout {
                Readout::Node(v) if v < n => vec![offset + v],
                Readout::Node(v) => {
                    return Err(Error::InvalidArgument(format!("example {i}: readout node {v} out of range")))
                }
                Readout::MeanPool if n == 0 => return Err(Error::AllMasked),
                Readout::MeanPool => (offset..offset + n).collect(),
            });
            offset += e.topology.total_nodes();
        }
        Ok(Batch {
            layout,
            features,
            readout,
            labels: examples.iter().map(|e| e.label).collect(),
            schedule,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

struct Trace<T> {
    inputs: Vec<Array2<T>>,
    caches: Vec<LayerCache<T>>,
    last: Array2<T>,
    pooled: Array2<T>,
    logits: Array2<T>,
}

fn run<T: Scalar>(model: &GinModel<T>, batch: &Batch<T>) -> Result<Trace<T>> {
    if batch.features.ncols() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "batch has {} input features, model expects {}",
            batch.features.ncols(),
            model.input_dim()
        )));
    }
    match &batch.schedule {
        Some(s) if *s != model.schedule() => {
            return Err(Error::InvalidArgument(format!(
                "model schedule {:?} differs from the instance schedule {s:?}",
                model.schedule()
            )))
        }
        None if model.layers.iter().any(|l| l.kind() == LayerKind::Expander) => {
            return Err(Error::InvalidArgument(
                "model has expander layers but the input is not rewired".into(),
            ))
        }
        _ => {}
    }
    let mut inputs = Vec::with_capacity(model.layers.len());
    let mut caches = Vec::with_capacity(model.layers.len());
    let mut h = batch.features.clone();
    for (i, layer) in model.layers.iter().enumerate() {
        let (out, cache) = match layer {
            Layer::Original(p) => original_forward(&h, &batch.layout, p),
            Layer::Expander(p) => expander_forward(&h, &batch.layout, p),
        };
        check_finite(&out, i)?;
        inputs.push(std::mem::replace(&mut h, out));
        caches.push(cache);
    }
    let mut pooled = Array2::zeros((batch.len(), h.ncols()));
    for (b, rows) in batch.readout.iter().enumerate() {
        let mean = gather(&h, rows).sum_axis(Axis(0)).mapv(|x| x / T::of_usize(rows.len()));
        pooled.row_mut(b).assign(&mean);
    }
    let logits = model.head.apply(&pooled);
    check_finite(&logits, model.layers.len())?;
    Ok(Trace {
        inputs,
        caches,
        last: h,
        pooled,
        logits,
    })
}

/// Backpropagates `∂L/∂logits`; returns parameter and input gradients.
fn backprop<T: Scalar>(model: &GinModel<T>, batch: &Batch<T>, trace: &Trace<T>, dlogits: &Array2<T>) -> (GinModel<T>, Array2<T>) {
    let mut grad = model.zeros_like();
    let dpooled = model.head.backward(&trace.pooled, dlogits, &mut grad.head);
    let mut dh = Array2::zeros(trace.last.raw_dim());
    for (b, rows) in batch.readout.iter().enumerate() {
        let scale = T::one() / T::of_usize(rows.len());
        for &r in rows {
            dh.row_mut(r).scaled_add(scale, &dpooled.row(b));
        }
    }
    for i in (0..model.layers.len()).rev() {
        let h = &trace.inputs[i];
        dh = match (&model.layers[i], &mut grad.layers[i], &trace.caches[i]) {
            (Layer::Original(p), Layer::Original(g), LayerCache::Original { z, a1 }) => {
                original_backward(h, &batch.layout, p, (z, a1), &dh, g)
            }
            (Layer::Expander(p), Layer::Expander(g), cache) => expander_backward(h, &batch.layout, p, cache, &dh, g),
            _ => unreachable!("gradient and cache mirror the model"),
        };
    }
    (grad, dh)
}

/// Mean cross-entropy and `∂L/∂logits`; also counts argmax hits.
fn cross_entropy<T: Scalar>(logits: &Array2<T>, labels: &[usize]) -> Result<(T, Array2<T>, usize)> {
    let b = T::of_usize(labels.len());
    let mut loss = T::zero();
    let mut correct = 0;
    let mut d = Array2::zeros(logits.raw_dim());
    for (i, (row, &y)) in logits.outer_iter().zip(labels).enumerate() {
        if y >= row.len() {
            return Err(Error::InvalidArgument(format!("label {y} out of range for {} classes", row.len())));
        }
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exp = row.mapv(|x| (x - max).exp());
        let z: T = exp.sum();
        loss += z.ln() + max - row[y];
        for (j, e) in exp.iter().enumerate() {
            d[[i, j]] = (*e / z - if j == y { T::one() } else { T::zero() }) / b;
        }
        // First maximal index wins ties.
        let argmax = (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best });
        correct += usize::from(argmax == y);
    }
    Ok((loss / b, d, correct))
}

/// Logits for one input.
pub fn forward<T: Scalar>(
    model: &GinModel<T>,
    topology: &Topology,
    features: &FeatureMatrix<T>,
    readout: Readout,
) -> Result<Array1<T>> {
    let batch = Batch::new(&[Example {
        topology: topology.clone(),
        features: features.clone(),
        readout,
        label: 0,
    }])?;
    Ok(run(model, &batch)?.logits.row(0).to_owned())
}

/// Logits for every example of the batch, one row each.
pub fn forward_batch<T: Scalar>(model: &GinModel<T>, batch: &Batch<T>) -> Result<Array2<T>> {
    Ok(run(model, batch)?.logits)
}

/// Loss and accuracy without gradients.
pub fn evaluate<T: Scalar>(model: &GinModel<T>, batch: &Batch<T>) -> Result<(T, f64)> {
    let logits = forward_batch(model, batch)?;
    let (loss, _, correct) = cross_entropy(&logits, batch.labels())?;
    Ok((loss, correct as f64 / batch.len() as f64))
}

/// Loss, accuracy and parameter gradients of the mean cross-entropy.
pub struct Gradients<T> {
    pub loss: T,
    pub accuracy: f64,
    pub grad: GinModel<T>,
}

pub fn gradients<T: Scalar>(model: &GinModel<T>, batch: &Batch<T>) -> Result<Gradients<T>> {
    let trace = run(model, batch)?;
    let (loss, dlogits, correct) = cross_entropy(&trace.logits, batch.labels())?;
    let (grad, _) = backprop(model, batch, &trace, &dlogits);
    Ok(Gradients {
        loss,
        accuracy: correct as f64 / batch.len() as f64,
        grad,
    })
}

/// `∂ logits[class] / ∂ features` for one input (original rows only).
pub fn input_gradient<T: Scalar>(
    model: &GinModel<T>,
    topology: &Topology,
    features: &FeatureMatrix<T>,
    readout: Readout,
    class: usize,
) -> Result<FeatureMatrix<T>> {
    let batch = Batch::new(&[Example {
        topology: topology.clone(),
        features: features.clone(),
        readout,
        label: 0,
    }])?;
    let trace = run(model, &batch)?;
    if class >= model.num_classes() {
        return Err(Error::InvalidArgument(format!("class {class} out of range")));
    }
    let mut d = Array2::zeros(trace.logits.raw_dim());
    d[[0, class]] = T::one();
    let (_, dx) = backprop(model, &batch, &trace, &d);
    Ok(dx.slice(ndarray::s![..topology.n(), ..]).to_owned())
}

pub const MAX_TREE_DEPTH: usize = 8;

/// A complete binary tree whose root must report the label of the leaf with
/// the same neighbour count. Nodes are in heap order with the root at 0;
/// internal nodes have count 0 and no label, the root has no label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeMatchInstance {
    pub depth: usize,
    pub tree: Graph,
    pub neighbor_count: Vec<usize>,
    pub label: Vec<Option<usize>>,
    pub root_id: usize,
    pub target_label: usize,
}

impl TreeMatchInstance {
    pub fn num_leaves(depth: usize) -> usize {
        1 << depth
    }

    pub fn num_classes(depth: usize) -> usize {
        Self::num_leaves(depth)
    }

    /// Count one-hot (width `2^depth + 1`) followed by label one-hot
    /// (width `2^depth`).
    pub fn feature_dim(depth: usize) -> usize {
        2 * Self::num_leaves(depth) + 1
    }

    pub fn leaves(&self) -> std::ops::Range<usize> {
        let l = Self::num_leaves(self.depth);
        l - 1..2 * l - 1
    }

    pub fn node_features<T: Scalar>(&self) -> FeatureMatrix<T> {
        let l = Self::num_leaves(self.depth);
        let mut x = Array2::zeros((self.tree.n(), Self::feature_dim(self.depth)));
        for v in 0..self.tree.n() {
            x[[v, self.neighbor_count[v]]] = T::one();
            if let Some(c) = self.label[v] {
                x[[v, l + 1 + c]] = T::one();
            }
        }
        x
    }
}

pub fn generate_tree_match<R: Rng + ?Sized>(depth: usize, rng: &mut R) -> Result<TreeMatchInstance> {
    if !(1..=MAX_TREE_DEPTH).contains(&depth) {
        return Err(Error::InvalidArgument(format!(
            "tree depth must be in 1..={MAX_TREE_DEPTH}, got {depth}"
        )));
    }
    let tree = families::binary_tree(depth as u32);
    let l = TreeMatchInstance::num_leaves(depth);
    let mut counts: Vec<usize> = (1..=l).collect();
    counts.shuffle(rng);
    let mut labels: Vec<usize> = (0..l).collect();
    labels.shuffle(rng);
    let chosen = rng.random_range(0..l);

    let mut neighbor_count = vec![0; tree.n()];
    let mut label = vec![None; tree.n()];
    for i in 0..l {
        neighbor_count[l - 1 + i] = counts[i];
        label[l - 1 + i] = Some(labels[i]);
    }
    neighbor_count[0] = counts[chosen];
    Ok(TreeMatchInstance {
        depth,
        tree,
        neighbor_count,
        label,
        root_id: 0,
        target_label: labels[chosen],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub depth: usize,
    /// Plain models need `num_layers >= depth + 1` for leaf information to
    /// reach the root.
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub learning_rate: T,
    pub epochs: usize,
    /// 0 trains on the full dataset each step.
    pub batch_size: usize,
    pub dataset_size: usize,
    pub seed: u64,
    pub rewire: bool,
    pub expander_k: usize,
    pub hyperedge_mode: HyperedgeMode,
    pub ramanujan: bool,
    pub optimizer: Optimizer,
    /// Gradients with a larger global Euclidean norm are rescaled to this
    /// norm before the update; 0 disables clipping.
    pub clip_norm: T,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(depth: usize) -> Self {
        TrainConfig {
            depth,
            num_layers: depth + 1,
            hidden_dim: 16,
            learning_rate: T::of(0.05),
            epochs: 500,
            batch_size: 32,
            dataset_size: 1000,
            seed: 0,
            rewire: false,
            expander_k: 3,
            hyperedge_mode: HyperedgeMode::Summation,
            ramanujan: false,
            optimizer: Optimizer::Sgd,
            clip_norm: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(1..=MAX_TREE_DEPTH).contains(&self.depth) {
            return bad("depth out of range");
        }
        if self.num_layers == 0 || self.hidden_dim == 0 || self.dataset_size == 0 {
            return bad("num_layers, hidden_dim and dataset_size must be positive");
        }
        if !(self.learning_rate >= T::zero()) || !self.learning_rate.is_finite() {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.clip_norm >= T::zero()) || !self.clip_norm.is_finite() {
            return bad("clip_norm must be finite and non-negative");
        }
        if self.rewire && (self.expander_k == 0 || self.expander_k > (2 << self.depth) - 1) {
            return bad("expander_k must lie in 1..=number of tree nodes");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Vec<LayerKind> {
        if self.rewire {
            rewire::layer_schedule(self.num_layers)
        } else {
            vec![LayerKind::Original; self.num_layers]
        }
    }
}

/// Tree-NeighborsMatch examples with root readout. Instances come from the
/// stream `mix_seed(seed, 0)`; expanders (if rewired) from `mix_seed(seed, 1)`
/// with one derived seed per instance.
pub fn tree_match_dataset<T: Scalar>(cfg: &TrainConfig<T>) -> Result<Vec<Example<T>>> {
    cfg.validate()?;
    let mut rng = rng_from_seed(mix_seed(cfg.seed, 0));
    let trees = (0..cfg.dataset_size)
        .map(|_| generate_tree_match(cfg.depth, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let topologies: Vec<Topology> = if cfg.rewire {
        let graphs: Vec<Graph> = trees.iter().map(|t| t.tree.clone()).collect();
        let mut gen = GeneratorConfig::new(0, cfg.expander_k, mix_seed(cfg.seed, 1));
        gen.ramanujan = cfg.ramanujan;
        rewire::augment_all(&graphs, &gen, cfg.num_layers)?
            .into_iter()
            .map(Topology::Rewired)
            .collect()
    } else {
        trees.iter().map(|t| Topology::Plain(t.tree.clone())).collect()
    };
    Ok(trees
        .iter()
        .zip(topologies)
        .map(|(t, topology)| Example {
            topology,
            features: t.node_features(),
            readout: Readout::Node(t.root_id),
            label: t.target_label,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics<T> {
    pub epoch: usize,
    /// Mean loss over the epoch's batches, measured before each update.
    pub loss: T,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub history: Vec<EpochMetrics<T>>,
    /// Loss and accuracy of the trained model on the whole dataset.
    pub final_loss: T,
    pub final_accuracy: f64,
    pub model: GinModel<T>,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        let (b1, b2, eps) = (T::of(0.9), T::of(0.999), T::of(1e-8));
        self.t += 1;
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
        }
    }
}

/// Trains a fresh model (initialised from `mix_seed(seed, 2)`) on
/// [`tree_match_dataset`]. Mini-batch order is shuffled from
/// `mix_seed(seed, 3)`. Single-threaded and deterministic.
pub fn train<T: Scalar>(cfg: &TrainConfig<T>) -> Result<TrainReport<T>> {
    let examples = tree_match_dataset(cfg)?;
    let mut model = GinModel::init(
        &cfg.schedule(),
        cfg.hyperedge_mode,
        TreeMatchInstance::feature_dim(cfg.depth),
        cfg.hidden_dim,
        TreeMatchInstance::num_classes(cfg.depth),
        &mut rng_from_seed(mix_seed(cfg.seed, 2)),
    )?;
    let full = Batch::new(&examples)?;
    let batch_size = if cfg.batch_size == 0 { examples.len() } else { cfg.batch_size };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffle_rng = rng_from_seed(mix_seed(cfg.seed, 3));
    let mut params = model.params();
    let mut adam = Adam {
        m: vec![T::zero(); params.len()],
        v: vec![T::zero(); params.len()],
        t: 0,
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches: Vec<Batch<T>> = if batch_size >= examples.len() {
            vec![full.clone()]
        } else {
            order.shuffle(&mut shuffle_rng);
            order
                .chunks(batch_size)
                .map(|idx| Batch::new(&idx.iter().map(|&i| &examples[i]).collect::<Vec<_>>()))
                .collect::<Result<_>>()?
        };
        let (mut loss, mut hits) = (T::zero(), 0.0);
        for batch in &batches {
            let g = gradients(&model, batch).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged { epoch, loss: f64::NAN },
                e => e,
            })?;
            if !g.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: g.loss.as_f64(),
                });
            }
            loss += g.loss * T::of_usize(batch.len());
            hits += g.accuracy * batch.len() as f64;
            let mut grad = g.grad.params();
            let norm = grad.iter().map(|&x| x * x).sum::<T>().sqrt();
            if cfg.clip_norm > T::zero() && norm > cfg.clip_norm {
                let scale = cfg.clip_norm / norm;
                grad.iter_mut().for_each(|x| *x *= scale);
            }
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, d) in params.iter_mut().zip(&grad) {
                        *p -= cfg.learning_rate * *d;
                    }
                }
                Optimizer::Adam => adam.step(&mut params, &grad, cfg.learning_rate),
            }
            model.set_params(&params)?;
        }
        history.push(EpochMetrics {
            epoch,
            loss: loss / T::of_usize(examples.len()),
            accuracy: hits / examples.len() as f64,
        });
    }
    let (final_loss, final_accuracy) = evaluate(&model, &full).map_err(|e| match e {
        Error::NonFinite { .. } => Error::Diverged {
            epoch: cfg.epochs,
            loss: f64::NAN,
        },
        e => e,
    })?;
    Ok(TrainReport {
        history,
        final_loss,
        final_accuracy,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::k_regular_bipartite;
    use crate::graph::families::*;
    use ndarray::array;

    fn rng(seed: u64) -> crate::construct::GeneratorRng {
        rng_from_seed(seed)
    }

    fn random_features(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = rng(seed);
        Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        assert_eq!(a.dim(), b.dim());
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn gin_hand_examples() {
        let id = GinLayerParams::<f64>::identity(1);
        let out = gin_layer_forward(&array![[1.0], [2.0]], &path(2), &id).unwrap();
        assert_eq!(out, array![[3.0], [3.0]]);
        let mut p = id.clone();
        p.epsilon = 0.5;
        assert_eq!(gin_layer_forward(&array![[2.0]], &Graph::empty(1), &p).unwrap(), array![[3.0]]);
        let out = gin_layer_forward(&array![[1.0], [2.0], [3.0]], &cycle(3), &id).unwrap();
        assert_eq!(out, array![[6.0], [6.0], [6.0]]);
        assert!(matches!(
            gin_layer_forward(&array![[1.0]], &path(2), &id),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn expander_hand_examples() {
        let p = ExpanderLayerParams::<f64>::identity(1, HyperedgeMode::Summation);
        let k11 = BipartiteExpander::new(1, vec![vec![0]]).unwrap();
        assert_eq!(expander_layer_forward(&array![[5.0], [0.0]], &k11, &p).unwrap(), array![[10.0], [5.0]]);

        let k33 = k_regular_bipartite(&GeneratorConfig::new(3, 3, 0)).unwrap();
        let h = array![[1.0], [2.0], [3.0], [0.0], [0.0], [0.0]];
        let out = expander_layer_forward(&h, &k33, &p).unwrap();
        assert_eq!(out, array![[19.0], [20.0], [21.0], [6.0], [6.0], [6.0]]);
    }

    #[test]
    fn hyperedge_state_depends_on_mode() {
        // Non-zero hyperedge input is kept (scaled by 1 + ε) in learned mode
        // and discarded in summation mode.
        let k11 = BipartiteExpander::new(1, vec![vec![0]]).unwrap();
        let h = array![[5.0], [7.0]];
        let sum = ExpanderLayerParams::<f64>::identity(1, HyperedgeMode::Summation);
        assert_eq!(expander_layer_forward(&h, &k11, &sum).unwrap(), array![[10.0], [5.0]]);
        let learned = ExpanderLayerParams::<f64>::identity(1, HyperedgeMode::Learned);
        assert_eq!(expander_layer_forward(&h, &k11, &learned).unwrap(), array![[17.0], [12.0]]);
    }

    /// Loop-based reference for one expander layer.
    fn expander_reference(h: &Array2<f64>, b: &BipartiteExpander, p: &ExpanderLayerParams<f64>) -> Array2<f64> {
        let n = b.n_left();
        let d = h.ncols();
        let mlp = |g: &GinLayerParams<f64>, z: &[f64]| -> Vec<f64> {
            let hid: Vec<f64> = (0..g.lin1.d_out())
                .map(|j| (g.lin1.bias[j] + (0..d).map(|i| z[i] * g.lin1.weight[[i, j]]).sum::<f64>()).max(0.0))
                .collect();
            (0..g.d_out())
                .map(|j| g.lin2.bias[j] + hid.iter().enumerate().map(|(i, x)| x * g.lin2.weight[[i, j]]).sum::<f64>())
                .collect()
        };
        let mut out = h.clone();
        for r in 0..n {
            let mut z = vec![0.0; d];
            for &l in b.left_neighbors(r) {
                for c in 0..d {
                    z[c] += h[[l, c]];
                }
            }
            let y = match &p.hyperedge {
                HyperedgeUpdate::Learned(g) => {
                    for c in 0..d {
                        z[c] += (1.0 + g.epsilon) * h[[n + r, c]];
                    }
                    mlp(g, &z)
                }
                HyperedgeUpdate::Summation(a) => (0..d)
                    .map(|j| a.bias[j] + (0..d).map(|i| z[i] * a.weight[[i, j]]).sum::<f64>())
                    .collect(),
            };
            for c in 0..d {
                out[[n + r, c]] = y[c];
            }
        }
        let mid = out.clone();
        for l in 0..n {
            let g = &p.backward_gin;
            let mut z: Vec<f64> = (0..d).map(|c| (1.0 + g.epsilon) * h[[l, c]]).collect();
            for r in b.right_neighbors(l) {
                for c in 0..d {
                    z[c] += mid[[n + r, c]];
                }
            }
            let y = mlp(g, &z);
            for c in 0..d {
                out[[l, c]] = y[c];
            }
        }
        out
    }

    #[test]
    fn expander_layer_matches_reference() {
        let b = k_regular_bipartite(&GeneratorConfig::new(4, 2, 3)).unwrap();
        for mode in [HyperedgeMode::Learned, HyperedgeMode::Summation] {
            let mut r = rng(17);
            let mut p = ExpanderLayerParams::<f64>::glorot(3, mode, &mut r);
            p.backward_gin.epsilon = 0.25;
            p.backward_gin.lin1.bias.fill(0.1);
            if let HyperedgeUpdate::Learned(f) = &mut p.hyperedge {
                f.epsilon = -0.5;
            }
            let h = random_features(8, 3, 5);
            let out = expander_layer_forward(&h, &b, &p).unwrap();
            assert!(max_abs_diff(&out, &expander_reference(&h, &b, &p)) <= 1e-12);
        }
    }

    #[test]
    fn learned_mode_golden() {
        let b = k_regular_bipartite(&GeneratorConfig::new(4, 2, 3)).unwrap();
        let p = ExpanderLayerParams::<f64>::glorot(2, HyperedgeMode::Learned, &mut rng(4));
        let h = Array2::from_shape_fn((8, 2), |(i, j)| if i < 4 { (i + 2 * j) as f64 / 4.0 } else { 0.0 });
        let out = expander_layer_forward(&h, &b, &p).unwrap();
        let golden = Array2::from_shape_vec((8, 2), GOLDEN_LEARNED.to_vec()).unwrap();
        assert!(max_abs_diff(&out, &golden) <= 1e-12, "{out:?}");
    }

    const GOLDEN_LEARNED: [f64; 16] = [
        -1.0652174558008494,
        0.8172348407227151,
        -1.1916087072559798,
        0.91420220986334,
        -1.3179999587111106,
        1.0111695790039652,
        -1.444391210166241,
        1.10813694814459,
        0.470410213608881,
        1.5346638046255108,
        0.5404129174468059,
        1.7630402571302282,
        0.2604021020951065,
        0.8495344471113586,
        0.33040480593303134,
        1.077910899616076,
    ];

    #[test]
    fn sum_aggregation_identity() {
        for n in 1..=16 {
            let mut r = rng(n as u64);
            let edges: Vec<(usize, usize)> = (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                .filter(|_| r.random_bool(0.3))
                .collect();
            let g = Graph::new(n, &edges).unwrap();
            // Non-negative input keeps the ReLU inactive.
            let h = random_features(n, 3, n as u64).mapv(f64::abs);
            let out = gin_layer_forward(&h, &g, &GinLayerParams::identity(3)).unwrap();
            let a = Array2::from_shape_vec((n, n), g.adjacency_matrix::<f64>()).unwrap() + Array2::<f64>::eye(n);
            assert!(max_abs_diff(&out, &a.dot(&h)) <= 1e-12);
        }
    }

    fn permute_rows(h: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
        let mut out = h.clone();
        for (v, &pv) in perm.iter().enumerate() {
            out.row_mut(pv).assign(&h.row(v));
        }
        out
    }

    #[test]
    fn permutation_equivariance() {
        use rand::seq::SliceRandom;
        for seed in 0..10 {
            let mut r = rng(seed);
            let n = 6 + seed as usize % 5;
            let g = circular_ladder(n);
            let mut perm: Vec<usize> = (0..2 * n).collect();
            perm.shuffle(&mut r);
            let p = GinLayerParams::<f64>::glorot(3, 4, 2, &mut r);
            let h = random_features(2 * n, 3, seed);
            let lhs = gin_layer_forward(&permute_rows(&h, &perm), &g.permuted(&perm).unwrap(), &p).unwrap();
            let rhs = permute_rows(&gin_layer_forward(&h, &g, &p).unwrap(), &perm);
            assert!(max_abs_diff(&lhs, &rhs) <= 1e-12);

            // Expander: permute left and hyperedge nodes separately.
            let b = k_regular_bipartite(&GeneratorConfig::new(n, 3, seed)).unwrap();
            let mut pl: Vec<usize> = (0..n).collect();
            let mut pr: Vec<usize> = (0..n).collect();
            pl.shuffle(&mut r);
            pr.shuffle(&mut r);
            let matchings: Vec<Vec<usize>> = b
                .matchings()
                .iter()
                .map(|m| {
                    let mut out = vec![0; n];
                    for l in 0..n {
                        out[pl[l]] = pr[m[l]];
                    }
                    out
                })
                .collect();
            let b2 = BipartiteExpander::new(n, matchings).unwrap();
            let full: Vec<usize> = pl.iter().copied().chain(pr.iter().map(|r| r + n)).collect();
            for mode in [HyperedgeMode::Learned, HyperedgeMode::Summation] {
                let p = ExpanderLayerParams::<f64>::glorot(3, mode, &mut r);
                let h = random_features(2 * n, 3, seed + 100);
                let lhs = expander_layer_forward(&permute_rows(&h, &full), &b2, &p).unwrap();
                let rhs = permute_rows(&expander_layer_forward(&h, &b, &p).unwrap(), &full);
                assert!(max_abs_diff(&lhs, &rhs) <= 1e-12);
            }
        }
    }

    #[test]
    fn pooling_examples() {
        let h = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(masked_mean_pool(&h, &[false, false]).unwrap(), array![2.0, 3.0]);
        assert_eq!(masked_mean_pool(&array![[1.0], [100.0]], &[false, true]).unwrap(), array![1.0]);
        assert_eq!(
            masked_mean_pool(&array![[2.0], [4.0], [6.0]], &[false, false, true]).unwrap(),
            array![3.0]
        );
        assert_eq!(masked_mean_pool(&array![[1.0]], &[true]), Err(Error::AllMasked));
    }

    #[test]
    fn depth_one_tree_with_identity_layers() {
        // Five features: count one-hot 0..=2 then label one-hot 0..=1. The
        // head reads the first two columns. After two identity layers the
        // root holds 3·x_root + 2·x_leaf1 + 2·x_leaf2.
        let head = Affine::<f64>::new(Array2::eye(5).slice(ndarray::s![.., ..2]).to_owned(), Array1::zeros(2)).unwrap();
        let model = GinModel::new(
            vec![
                Layer::Original(GinLayerParams::identity(5)),
                Layer::Original(GinLayerParams::identity(5)),
            ],
            head,
        )
        .unwrap();
        for seed in 0..8 {
            let t = generate_tree_match(1, &mut rng(seed)).unwrap();
            let logits = forward(&model, &Topology::Plain(t.tree.clone()), &t.node_features(), Readout::Node(0)).unwrap();
            let expected = if t.neighbor_count[0] == 1 { 5.0 } else { 2.0 };
            assert_eq!(logits, array![0.0, expected]);
        }
    }

    #[test]
    fn single_layer_forward_is_the_layer() {
        let mut r = rng(2);
        let p = GinLayerParams::<f64>::glorot(2, 3, 3, &mut r);
        let model = GinModel::new(vec![Layer::Original(p.clone())], Affine::identity(3)).unwrap();
        let h = random_features(3, 2, 9);
        let direct = gin_layer_forward(&h, &path(3), &p).unwrap();
        for v in 0..3 {
            let logits = forward(&model, &Topology::Plain(path(3)), &h, Readout::Node(v)).unwrap();
            assert_eq!(logits, direct.row(v));
        }
        let pooled = forward(&model, &Topology::Plain(path(3)), &h, Readout::MeanPool).unwrap();
        assert!((&pooled - &direct.mean_axis(Axis(0)).unwrap()).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn zero_input_zero_logits() {
        let inst = rewire::augment(&cycle(6), &GeneratorConfig::new(6, 3, 0), 3).unwrap();
        for mode in [HyperedgeMode::Learned, HyperedgeMode::Summation] {
            let model = GinModel::<f64>::init(inst.schedule(), mode, 4, 8, 3, &mut rng(1)).unwrap();
            let logits = forward(&model, &Topology::Rewired(inst.clone()), &Array2::zeros((6, 4)), Readout::MeanPool).unwrap();
            assert_eq!(logits, Array1::<f64>::zeros(3));
        }
    }

    #[test]
    fn schedule_must_match() {
        let inst = rewire::augment(&cycle(4), &GeneratorConfig::new(4, 2, 0), 2).unwrap();
        let plain = GinModel::<f64>::init(&[LayerKind::Original; 2], HyperedgeMode::Summation, 2, 2, 2, &mut rng(0)).unwrap();
        let x = Array2::zeros((4, 2));
        assert!(forward(&plain, &Topology::Rewired(inst.clone()), &x, Readout::MeanPool).is_err());
        let rewired = GinModel::<f64>::init(inst.schedule(), HyperedgeMode::Summation, 2, 2, 2, &mut rng(0)).unwrap();
        assert!(forward(&rewired, &Topology::Plain(cycle(4)), &x, Readout::MeanPool).is_err());
        assert!(forward(&rewired, &Topology::Rewired(inst), &x, Readout::MeanPool).is_ok());
    }

    #[test]
    fn params_round_trip() {
        let mut model = GinModel::<f64>::init(&rewire::layer_schedule(4), HyperedgeMode::Learned, 5, 6, 3, &mut rng(8)).unwrap();
        let p = model.params();
        let shifted: Vec<f64> = p.iter().map(|x| x + 1.0).collect();
        model.set_params(&shifted).unwrap();
        assert_eq!(model.params(), shifted);
        assert!(model.set_params(&p[1..]).is_err());
        // 5→6 GIN, learned expander (two 6→6 GINs), 6→6 GIN, learned expander, head.
        let gin = |i: usize, o: usize| 1 + i * o + o + o * o + o;
        assert_eq!(p.len(), gin(5, 6) + 2 * gin(6, 6) + gin(6, 6) + 2 * gin(6, 6) + 6 * 3 + 3);
    }

    #[test]
    fn epsilon_without_signal_has_zero_gradient() {
        let model = GinModel::new(vec![Layer::Original(GinLayerParams::identity(2))], Affine::identity(2)).unwrap();
        let batch = Batch::new(&[Example {
            topology: Topology::Plain(Graph::empty(1)),
            features: Array2::<f64>::zeros((1, 2)),
            readout: Readout::Node(0),
            label: 1,
        }])
        .unwrap();
        let g = gradients(&model, &batch).unwrap();
        assert_eq!(g.grad.params()[0], 0.0);
        assert!((g.loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn raising_the_correct_logit_lowers_the_loss() {
        let mut model = GinModel::new(vec![Layer::Original(GinLayerParams::identity(2))], Affine::identity(2)).unwrap();
        let batch = Batch::new(&[Example {
            topology: Topology::Plain(path(2)),
            features: array![[1.0, 0.5], [0.5, 1.0]],
            readout: Readout::Node(0),
            label: 1,
        }])
        .unwrap();
        let before = gradients(&model, &batch).unwrap();
        // Head weight from feature 1 into the correct class.
        let idx = model.param_count() - 2 - 1;
        assert!(before.grad.params()[idx] < 0.0);
        let mut p = model.params();
        p[idx] += 1e-3;
        model.set_params(&p).unwrap();
        assert!(evaluate(&model, &batch).unwrap().0 < before.loss);
    }

    #[test]
    fn receptive_field_of_a_path() {
        let g = path(7);
        let x = random_features(7, 2, 3).mapv(f64::abs);
        let plain = GinModel::<f64>::init(&[LayerKind::Original; 3], HyperedgeMode::Summation, 2, 8, 2, &mut rng(1)).unwrap();
        let d = input_gradient(&plain, &Topology::Plain(g.clone()), &x, Readout::Node(6), 0).unwrap();
        assert!(d.row(0).iter().all(|&v| v == 0.0));
        assert!(d.row(4).iter().any(|&v| v != 0.0));

        let inst = rewire::augment(&g, &GeneratorConfig::new(7, 3, 0), 3).unwrap();
        let rewired = GinModel::<f64>::init(inst.schedule(), HyperedgeMode::Summation, 2, 8, 2, &mut rng(1)).unwrap();
        let d = input_gradient(&rewired, &Topology::Rewired(inst), &x, Readout::Node(6), 0).unwrap();
        assert!(d.row(0).iter().map(|v| v.abs()).fold(0.0, f64::max) > 1e-9);
    }

    #[test]
    fn tree_structure() {
        for depth in 1..=4 {
            for seed in 0..20 {
                let t = generate_tree_match(depth, &mut rng(seed)).unwrap();
                let l = 1 << depth;
                assert_eq!(t.tree.n(), 2 * l - 1);
                let mut counts: Vec<usize> = t.leaves().map(|v| t.neighbor_count[v]).collect();
                counts.sort_unstable();
                assert_eq!(counts, (1..=l).collect::<Vec<_>>());
                let matching: Vec<usize> = t.leaves().filter(|&v| t.neighbor_count[v] == t.neighbor_count[0]).collect();
                assert_eq!(matching.len(), 1);
                assert_eq!(t.label[matching[0]], Some(t.target_label));
                assert!(t.label[..l - 1].iter().all(Option::is_none));
                let x = t.node_features::<f64>();
                assert_eq!(x.ncols(), 2 * l + 1);
                assert!(x.rows().into_iter().enumerate().all(|(v, row)| row.sum() == if t.leaves().contains(&v) { 2.0 } else { 1.0 }));
            }
        }
        assert!(generate_tree_match(0, &mut rng(0)).is_err());
        assert!(generate_tree_match(9, &mut rng(0)).is_err());
    }

    #[test]
    fn target_labels_are_uniform() {
        let mut r = rng(2024);
        let mut freq = [0usize; 4];
        let samples = 1000;
        for _ in 0..samples {
            freq[generate_tree_match(2, &mut r).unwrap().target_label] += 1;
        }
        let expected = samples as f64 / 4.0;
        let chi2: f64 = freq.iter().map(|&f| (f as f64 - expected).powi(2) / expected).sum();
        // 99th percentile of χ² with 3 degrees of freedom.
        assert!(chi2 < 11.345, "chi2 = {chi2}, counts {freq:?}");
    }
}
