//! Next-frame flow prediction behind a small predictor contract, plus
//! closed-loop multi-step rollout.
//!
//! Three predictors are provided: persistence, a same-slot historical average
//! and a per-cluster ridge regression over the five-frame input window.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::trajdata::FlowTensor;
use crate::{Error, Result};

/// Number of consecutive frames a prediction consumes.
pub const WINDOW_LEN: usize = 5;

/// One week of 10-minute slots.
pub const DEFAULT_PERIOD_INTERVALS: usize = 1008;

pub const DEFAULT_RIDGE_LAMBDA: f64 = 10.0;

/// Real-valued in/out flows for one interval, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFrame {
    pub rows: usize,
    pub cols: usize,
    pub inflow: Vec<f64>,
    pub outflow: Vec<f64>,
}

impl FlowFrame {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FlowFrame {
            rows,
            cols,
            inflow: vec![0.0; rows * cols],
            outflow: vec![0.0; rows * cols],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    fn same_shape(&self, other: &FlowFrame) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn is_valid(&self) -> bool {
        self.inflow.len() == self.n_cells()
            && self.outflow.len() == self.n_cells()
            && self
                .inflow
                .iter()
                .chain(&self.outflow)
                .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Persistence,
    HistoricalAverage,
    Ridge,
}

impl PredictorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "persistence" => Some(PredictorKind::Persistence),
            "historical_average" => Some(PredictorKind::HistoricalAverage),
            "ridge" => Some(PredictorKind::Ridge),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PredictorKind::Persistence => "persistence",
            PredictorKind::HistoricalAverage => "historical_average",
            PredictorKind::Ridge => "ridge",
        }
    }

    fn code(&self) -> u32 {
        match self {
            PredictorKind::Persistence => 0,
            PredictorKind::HistoricalAverage => 1,
            PredictorKind::Ridge => 2,
        }
    }

    fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(PredictorKind::Persistence),
            1 => Some(PredictorKind::HistoricalAverage),
            2 => Some(PredictorKind::Ridge),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub lambda: f64,
    pub period_intervals: usize,
}

impl PredictorSpec {
    pub fn new(kind: PredictorKind) -> Self {
        PredictorSpec {
            kind,
            lambda: DEFAULT_RIDGE_LAMBDA,
            period_intervals: DEFAULT_PERIOD_INTERVALS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::config(format!(
                "ridge lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.period_intervals == 0 {
            return Err(Error::config("period_intervals must be at least 1"));
        }
        Ok(())
    }
}

/// A set of output cells predicted from a set of input cells by one shared
/// linear map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGroup {
    /// Cell indices whose window flows form the features, sorted.
    pub inputs: Vec<usize>,
    /// Cell indices whose next-frame flows are predicted, sorted.
    pub outputs: Vec<usize>,
}

impl CellGroup {
    /// Feature count: in and out flows of every input cell for each window
    /// frame, plus a bias term.
    pub fn n_features(&self) -> usize {
        2 * WINDOW_LEN * self.inputs.len() + 1
    }

    pub fn n_targets(&self) -> usize {
        2 * self.outputs.len()
    }

    /// Features ordered oldest frame first; within a frame all inflows, then
    /// all outflows, of the input cells. The last feature is the constant 1.
    pub fn features(&self, window: &[FlowFrame], out: &mut Vec<f64>) {
        out.clear();
        for f in window {
            out.extend(self.inputs.iter().map(|&c| f.inflow[c]));
            out.extend(self.inputs.iter().map(|&c| f.outflow[c]));
        }
        out.push(1.0);
    }

    fn targets(&self, frame: &FlowFrame, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.outputs.iter().map(|&c| frame.inflow[c]));
        out.extend(self.outputs.iter().map(|&c| frame.outflow[c]));
    }
}

/// Trained ridge maps, one per cell group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub lambda: f64,
    pub n_cells: usize,
    pub groups: Vec<CellGroup>,
    /// Per group, a row-major `n_targets × n_features` matrix.
    pub weights: Vec<Vec<f64>>,
}

impl RidgeModel {
    /// Assembles a model from explicit maps. Every group's weight matrix must
    /// have `n_targets × n_features` entries.
    pub fn from_parts(
        lambda: f64,
        n_cells: usize,
        groups: Vec<CellGroup>,
        weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if groups.len() != weights.len() {
            return Err(Error::config(
                "one weight matrix is required per cell group",
            ));
        }
        for (g, w) in groups.iter().zip(&weights) {
            if w.len() != g.n_targets() * g.n_features() {
                return Err(Error::config("ridge weight matrix has the wrong size"));
            }
            if g.inputs.iter().chain(&g.outputs).any(|&c| c >= n_cells) {
                return Err(Error::config(
                    "cell group refers to a cell outside the grid",
                ));
            }
        }
        Ok(RidgeModel {
            lambda,
            n_cells,
            groups,
            weights,
        })
    }

    fn predict(&self, window: &[FlowFrame], out: &mut FlowFrame, only: Option<&[bool]>) {
        let mut x = Vec::new();
        for (i, (g, w)) in self.groups.iter().zip(&self.weights).enumerate() {
            if only.is_some_and(|o| !o[i]) {
                continue;
            }
            g.features(window, &mut x);
            let d = x.len();
            let m = g.outputs.len();
            for (r, row) in w.chunks_exact(d).enumerate() {
                let y: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
                if r < m {
                    out.inflow[g.outputs[r]] = y;
                } else {
                    out.outflow[g.outputs[r - m]] = y;
                }
            }
        }
    }
}

/// Solves the ridge problem `min ||XW − Y||² + λ||W||²` and returns `Wᵀ`
/// (targets × features). The primal normal equations are used when there are
/// at least as many samples as features, otherwise the dual (kernel) form.
pub fn ridge_solve(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let (n, d) = x.shape();
    let singular = || {
        Error::config(format!(
            "ridge system is singular ({n} samples, {d} features, lambda {lambda}); increase lambda"
        ))
    };
    let solve = |a: DMatrix<f64>, b: DMatrix<f64>| -> Result<DMatrix<f64>> {
        if let Some(ch) = a.clone().cholesky() {
            return Ok(ch.solve(&b));
        }
        a.lu().solve(&b).ok_or_else(singular)
    };
    let w = if n >= d {
        let mut a = x.tr_mul(x);
        for i in 0..d {
            a[(i, i)] += lambda;
        }
        solve(a, x.tr_mul(y))?
    } else {
        let mut a = x * x.transpose();
        for i in 0..n {
            a[(i, i)] += lambda;
        }
        x.tr_mul(&solve(a, y.clone())?)
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(w.transpose())
}

/// A predictor with its training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub spec: PredictorSpec,
    pub ridge: Option<RidgeModel>,
}

/// What a prediction may look at besides its window.
#[derive(Debug, Clone, Copy)]
pub struct PredictContext<'a> {
    pub tensor: &'a FlowTensor,
    /// Interval being predicted.
    pub target: usize,
    /// Last interval whose observed frame may be used.
    pub observed_until: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub base_interval: usize,
    /// Horizons 1..=H.
    pub frames: Vec<FlowFrame>,
    /// Negative raw outputs replaced by zero.
    pub clamped: usize,
}

impl Predictor {
    pub fn untrained(spec: PredictorSpec) -> Self {
        Predictor { spec, ridge: None }
    }

    pub fn kind(&self) -> PredictorKind {
        self.spec.kind
    }

    /// Cells whose window flows can influence the prediction of `cell`.
    pub fn input_locality(&self, cell: usize) -> Vec<usize> {
        match (&self.spec.kind, &self.ridge) {
            (PredictorKind::Ridge, Some(m)) => m
                .groups
                .iter()
                .find(|g| g.outputs.binary_search(&cell).is_ok())
                .map(|g| g.inputs.clone())
                .unwrap_or_else(|| vec![cell]),
            _ => vec![cell],
        }
    }

    /// Raw next-frame prediction (may be negative).
    fn predict_raw(
        &self,
        window: &[FlowFrame],
        ctx: &PredictContext<'_>,
        only: Option<&[bool]>,
    ) -> Result<FlowFrame> {
        if window.len() != WINDOW_LEN {
            return Err(Error::input(format!(
                "prediction window must hold exactly {WINDOW_LEN} frames, got {}",
                window.len()
            )));
        }
        let last = &window[WINDOW_LEN - 1];
        if window.iter().any(|f| !f.same_shape(last) || !f.is_valid()) {
            return Err(Error::input(
                "window frames have inconsistent shapes or non-finite values",
            ));
        }
        if last.rows != ctx.tensor.grid.rows || last.cols != ctx.tensor.grid.cols {
            return Err(Error::input("window shape does not match the flow tensor"));
        }
        match self.spec.kind {
            PredictorKind::Persistence => Ok(last.clone()),
            PredictorKind::HistoricalAverage => {
                let p = self.spec.period_intervals;
                let mut acc = FlowFrame::zeros(last.rows, last.cols);
                let mut count = 0usize;
                let mut k = ctx.target;
                while k >= p {
                    k -= p;
                    if k <= ctx.observed_until && k < ctx.tensor.n_intervals() {
                        let f = ctx.tensor.frame(k);
                        for (a, b) in acc.inflow.iter_mut().zip(&f.inflow) {
                            *a += b;
                        }
                        for (a, b) in acc.outflow.iter_mut().zip(&f.outflow) {
                            *a += b;
                        }
                        count += 1;
                    }
                }
                if count == 0 {
                    return Ok(last.clone());
                }
                let s = 1.0 / count as f64;
                acc.inflow
                    .iter_mut()
                    .chain(acc.outflow.iter_mut())
                    .for_each(|v| *v *= s);
                Ok(acc)
            }
            PredictorKind::Ridge => {
                let m = self
                    .ridge
                    .as_ref()
                    .ok_or_else(|| Error::State("ridge predictor has not been trained".into()))?;
                if m.n_cells != last.n_cells() {
                    return Err(Error::input("ridge model was trained on a different grid"));
                }
                let mut out = last.clone();
                m.predict(window, &mut out, only);
                Ok(out)
            }
        }
    }

    /// Predicts the frame following a five-frame window. Negative outputs are
    /// clamped to zero; the second value counts them.
    pub fn predict_next(
        &self,
        window: &[FlowFrame],
        ctx: &PredictContext<'_>,
    ) -> Result<(FlowFrame, usize)> {
        self.predict_masked(window, ctx, None)
    }

    fn predict_masked(
        &self,
        window: &[FlowFrame],
        ctx: &PredictContext<'_>,
        only: Option<&[bool]>,
    ) -> Result<(FlowFrame, usize)> {
        let mut f = self.predict_raw(window, ctx, only)?;
        let mut clamped = 0;
        for v in f.inflow.iter_mut().chain(f.outflow.iter_mut()) {
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
        }
        Ok((f, clamped))
    }

    /// Closed-loop rollout from an explicit window ending at `base`: each
    /// prediction is appended to the window for the next horizon.
    pub fn rollout(
        &self,
        window: Vec<FlowFrame>,
        tensor: &FlowTensor,
        base: usize,
        horizons: usize,
    ) -> Result<Forecast> {
        if horizons < 1 {
            return Err(Error::config("forecast horizon count must be at least 1"));
        }
        let mut window = window;
        let mut frames = Vec::with_capacity(horizons);
        let mut clamped = 0;
        for h in 1..=horizons {
            let ctx = PredictContext {
                tensor,
                target: base + h,
                observed_until: base,
            };
            let (f, c) = self.predict_next(&window, &ctx)?;
            clamped += c;
            window.remove(0);
            window.push(f.clone());
            frames.push(f);
        }
        Ok(Forecast {
            base_interval: base,
            frames,
            clamped,
        })
    }

    /// The frame at `horizon` of [`Predictor::rollout`], exact for the cells
    /// in `targets`. Ridge skips groups that cannot reach the targets; other
    /// cells of the returned frame are unspecified.
    pub fn rollout_frame(
        &self,
        window: Vec<FlowFrame>,
        tensor: &FlowTensor,
        base: usize,
        horizon: usize,
        targets: &[usize],
    ) -> Result<FlowFrame> {
        let model = match (&self.spec.kind, &self.ridge) {
            (PredictorKind::Ridge, Some(m)) if horizon >= 1 => m,
            _ => {
                return Ok(self
                    .rollout(window, tensor, base, horizon)?
                    .frames
                    .remove(horizon - 1))
            }
        };
        let n_groups = model.groups.len();
        let owner = |cells: &mut dyn Iterator<Item = usize>, mark: &mut Vec<bool>| {
            for c in cells {
                if let Some(g) = model
                    .groups
                    .iter()
                    .position(|g| g.outputs.binary_search(&c).is_ok())
                {
                    mark[g] = true;
                }
            }
        };
        // needed[s]: groups whose step-s outputs feed a later needed group
        let mut needed = vec![vec![false; n_groups]; horizon];
        owner(&mut targets.iter().copied(), &mut needed[horizon - 1]);
        for s in (0..horizon - 1).rev() {
            let mut cells = vec![false; model.n_cells];
            for later in &needed[s + 1..] {
                for (g, _) in later.iter().enumerate().filter(|(_, &on)| on) {
                    for &c in &model.groups[g].inputs {
                        cells[c] = true;
                    }
                }
            }
            owner(
                &mut cells
                    .iter()
                    .enumerate()
                    .filter(|(_, &on)| on)
                    .map(|(c, _)| c),
                &mut needed[s],
            );
        }
        let mut window = window;
        for (s, only) in needed.iter().enumerate() {
            let ctx = PredictContext {
                tensor,
                target: base + s + 1,
                observed_until: base,
            };
            let (f, _) = self.predict_masked(&window, &ctx, Some(only))?;
            window.remove(0);
            window.push(f);
        }
        Ok(window.pop().expect("window is never empty"))
    }
}

/// The observed five-frame window ending at `base`.
pub fn observed_window(tensor: &FlowTensor, base: usize) -> Result<Vec<FlowFrame>> {
    if base + 1 < WINDOW_LEN {
        return Err(Error::config(format!(
            "base interval {base} needs at least {} predecessors",
            WINDOW_LEN - 1
        )));
    }
    if base >= tensor.n_intervals() {
        return Err(Error::NotFound(format!(
            "base interval {base} is outside the {} observed intervals",
            tensor.n_intervals()
        )));
    }
    Ok((base + 1 - WINDOW_LEN..=base)
        .map(|i| tensor.frame(i))
        .collect())
}

/// Forecasts horizons `1..=horizons` after `base` from observed data.
pub fn rolling_forecast(
    predictor: &Predictor,
    tensor: &FlowTensor,
    base: usize,
    horizons: usize,
) -> Result<Forecast> {
    if horizons < 1 {
        return Err(Error::config("forecast horizon count must be at least 1"));
    }
    predictor.rollout(observed_window(tensor, base)?, tensor, base, horizons)
}

/// Fits a predictor on the intervals in `train_range`.
///
/// Ridge needs cell groups (normally a cluster's cells as outputs, the
/// cluster plus its adjacent clusters as inputs) and at least one full
/// window plus target inside the range.
pub fn train(
    spec: &PredictorSpec,
    tensor: &FlowTensor,
    train_range: Range<usize>,
    groups: &[CellGroup],
) -> Result<Predictor> {
    spec.validate()?;
    if train_range.end > tensor.n_intervals() || train_range.start >= train_range.end {
        return Err(Error::config(format!(
            "training range {:?} is empty or exceeds the {} observed intervals",
            train_range,
            tensor.n_intervals()
        )));
    }
    if spec.kind != PredictorKind::Ridge {
        return Ok(Predictor::untrained(*spec));
    }
    let needed = WINDOW_LEN + 1;
    if train_range.len() < needed {
        return Err(Error::config(format!(
            "ridge training needs at least {needed} intervals, got {}",
            train_range.len()
        )));
    }
    if groups.is_empty() {
        return Err(Error::config(
            "ridge training needs at least one cell group",
        ));
    }
    let n_cells = tensor.grid.n_cells();
    let frames: Vec<FlowFrame> = train_range.clone().map(|i| tensor.frame(i)).collect();
    let samples = frames.len() - WINDOW_LEN;

    let fit_group = |g: &CellGroup| -> Result<Vec<f64>> {
        let d = g.n_features();
        let m = g.n_targets();
        let mut x = DMatrix::<f64>::zeros(samples, d);
        let mut y = DMatrix::<f64>::zeros(samples, m);
        let mut buf = Vec::with_capacity(d);
        for s in 0..samples {
            g.features(&frames[s..s + WINDOW_LEN], &mut buf);
            for (j, v) in buf.iter().enumerate() {
                x[(s, j)] = *v;
            }
            g.targets(&frames[s + WINDOW_LEN], &mut buf);
            for (j, v) in buf.iter().enumerate() {
                y[(s, j)] = *v;
            }
        }
        let w = ridge_solve(&x, &y, spec.lambda)?;
        // row-major targets × features
        Ok((0..m)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| w[(r, c)])
            .collect())
    };

    #[cfg(feature = "parallel")]
    let weights: Result<Vec<Vec<f64>>> = {
        use rayon::prelude::*;
        groups.par_iter().map(fit_group).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let weights: Result<Vec<Vec<f64>>> = groups.iter().map(fit_group).collect();

    let model = RidgeModel::from_parts(spec.lambda, n_cells, groups.to_vec(), weights?)?;
    Ok(Predictor {
        spec: *spec,
        ridge: Some(model),
    })
}

const MODEL_MAGIC: &[u8; 4] = b"TPRM";
const MODEL_VERSION: u32 = 1;

impl Predictor {
    /// Flat little-endian encoding:
    ///
    /// ```text
    /// "TPRM" version:u32 kind:u32 period:u32 lambda:f64 trained:u32
    /// [n_cells:u32 n_groups:u32
    ///   { n_in:u32 inputs:u32* n_out:u32 outputs:u32* weights:f64* }*]
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let put = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(MODEL_MAGIC);
        put(&mut out, MODEL_VERSION);
        put(&mut out, self.spec.kind.code());
        put(&mut out, self.spec.period_intervals as u32);
        out.extend_from_slice(&self.spec.lambda.to_le_bytes());
        put(&mut out, self.ridge.is_some() as u32);
        if let Some(m) = &self.ridge {
            put(&mut out, m.n_cells as u32);
            put(&mut out, m.groups.len() as u32);
            for (g, w) in m.groups.iter().zip(&m.weights) {
                put(&mut out, g.inputs.len() as u32);
                g.inputs.iter().for_each(|&c| put(&mut out, c as u32));
                put(&mut out, g.outputs.len() as u32);
                g.outputs.iter().for_each(|&c| put(&mut out, c as u32));
                w.iter()
                    .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::format("not a predictor model file (bad magic)"));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::format(format!(
                "unsupported model version {version}"
            )));
        }
        let kind = PredictorKind::from_code(r.u32()?)
            .ok_or_else(|| Error::format("unknown predictor kind"))?;
        let period_intervals = r.u32()? as usize;
        let lambda = r.f64()?;
        let spec = PredictorSpec {
            kind,
            lambda,
            period_intervals,
        };
        let ridge = if r.u32()? == 1 {
            let n_cells = r.u32()? as usize;
            let n_groups = r.u32()? as usize;
            let mut groups = Vec::with_capacity(n_groups);
            let mut weights = Vec::with_capacity(n_groups);
            for _ in 0..n_groups {
                let n_in = r.u32()? as usize;
                let inputs = (0..n_in)
                    .map(|_| r.u32().map(|v| v as usize))
                    .collect::<Result<Vec<_>>>()?;
                let n_out = r.u32()? as usize;
                let outputs = (0..n_out)
                    .map(|_| r.u32().map(|v| v as usize))
                    .collect::<Result<Vec<_>>>()?;
                let g = CellGroup { inputs, outputs };
                let w = (0..g.n_targets() * g.n_features())
                    .map(|_| r.f64())
                    .collect::<Result<Vec<_>>>()?;
                groups.push(g);
                weights.push(w);
            }
            Some(RidgeModel::from_parts(lambda, n_cells, groups, weights)?)
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::format("trailing bytes after predictor model"));
        }
        Ok(Predictor { spec, ridge })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::format("truncated predictor model"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BBox, GridSpec};
    use crate::trajdata::TimeAxis;

    fn tensor_from(frames: &[(Vec<u32>, Vec<u32>)], rows: usize, cols: usize) -> FlowTensor {
        let grid = GridSpec::new(BBox::new(0.0, 0.0, 1.0, 1.0), rows, cols).unwrap();
        let axis = TimeAxis::new(0, 600, frames.len()).unwrap();
        let mut t = FlowTensor::zeros(grid, axis);
        t.inflow = frames.iter().flat_map(|f| f.0.clone()).collect();
        t.outflow = frames.iter().flat_map(|f| f.1.clone()).collect();
        t
    }

    fn ramp(n: usize) -> FlowTensor {
        let frames: Vec<_> = (0..n)
            .map(|i| (vec![i as u32, 1], vec![2 * i as u32, 0]))
            .collect();
        tensor_from(&frames, 1, 2)
    }

    #[test]
    fn persistence_returns_last_frame() {
        let t = ramp(8);
        let p = Predictor::untrained(PredictorSpec::new(PredictorKind::Persistence));
        let w = observed_window(&t, 6).unwrap();
        let ctx = PredictContext {
            tensor: &t,
            target: 7,
            observed_until: 6,
        };
        let (f, clamped) = p.predict_next(&w, &ctx).unwrap();
        assert_eq!(f, t.frame(6));
        assert_eq!(clamped, 0);
    }

    #[test]
    fn historical_average_means_prior_periods() {
        // period 4: target 10 looks at 6 and 2
        let mut frames: Vec<_> = (0..11).map(|_| (vec![0u32], vec![0u32])).collect();
        frames[2].0[0] = 2;
        frames[6].0[0] = 4;
        frames[9].0[0] = 9;
        let t = tensor_from(&frames, 1, 1);
        let spec = PredictorSpec {
            kind: PredictorKind::HistoricalAverage,
            lambda: 0.0,
            period_intervals: 4,
        };
        let p = Predictor::untrained(spec);
        let w = observed_window(&t, 9).unwrap();
        let ctx = PredictContext {
            tensor: &t,
            target: 10,
            observed_until: 9,
        };
        assert_eq!(p.predict_next(&w, &ctx).unwrap().0.inflow, vec![3.0]);

        // no prior period: falls back to persistence
        let ctx = PredictContext {
            tensor: &t,
            target: 3,
            observed_until: 9,
        };
        assert_eq!(p.predict_next(&w, &ctx).unwrap().0.inflow, vec![9.0]);
    }

    #[test]
    fn window_length_and_shape_are_checked() {
        let t = ramp(8);
        let p = Predictor::untrained(PredictorSpec::new(PredictorKind::Persistence));
        let ctx = PredictContext {
            tensor: &t,
            target: 7,
            observed_until: 6,
        };
        let w = observed_window(&t, 6).unwrap();
        assert!(matches!(
            p.predict_next(&w[1..], &ctx),
            Err(Error::Input(_))
        ));
        let mut bad = w.clone();
        bad[0] = FlowFrame::zeros(2, 2);
        assert!(matches!(p.predict_next(&bad, &ctx), Err(Error::Input(_))));
    }

    #[test]
    fn untrained_ridge_is_state_error() {
        let t = ramp(8);
        let p = Predictor::untrained(PredictorSpec::new(PredictorKind::Ridge));
        let w = observed_window(&t, 6).unwrap();
        let ctx = PredictContext {
            tensor: &t,
            target: 7,
            observed_until: 6,
        };
        assert!(matches!(p.predict_next(&w, &ctx), Err(Error::State(_))));
    }

    #[test]
    fn ridge_needs_six_intervals() {
        let t = ramp(8);
        let spec = PredictorSpec::new(PredictorKind::Ridge);
        let groups = vec![CellGroup {
            inputs: vec![0, 1],
            outputs: vec![0, 1],
        }];
        let err = train(&spec, &t, 0..5, &groups).unwrap_err();
        assert!(err.to_string().contains("at least 6"), "{err}");
        assert!(train(&spec, &t, 0..6, &groups).is_ok());
    }

    #[test]
    fn persistence_training_is_trivial() {
        let t = ramp(3);
        let p = train(
            &PredictorSpec::new(PredictorKind::Persistence),
            &t,
            0..3,
            &[],
        )
        .unwrap();
        assert!(p.ridge.is_none());
    }

    #[test]
    fn huge_lambda_drives_predictions_to_zero() {
        let t = ramp(20);
        let groups = vec![CellGroup {
            inputs: vec![0, 1],
            outputs: vec![0, 1],
        }];
        let mut prev = f64::INFINITY;
        for lambda in [1e2, 1e6, 1e10, 1e14] {
            let spec = PredictorSpec {
                kind: PredictorKind::Ridge,
                lambda,
                period_intervals: 1,
            };
            let p = train(&spec, &t, 0..20, &groups).unwrap();
            let f = rolling_forecast(&p, &t, 19, 1).unwrap();
            let peak = f.frames[0]
                .inflow
                .iter()
                .chain(&f.frames[0].outflow)
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(peak <= prev);
            prev = peak;
        }
        assert!(prev < 1e-6, "{prev}");
    }

    #[test]
    fn rollout_rejects_zero_horizons_and_short_history() {
        let t = ramp(8);
        let p = Predictor::untrained(PredictorSpec::new(PredictorKind::Persistence));
        assert!(matches!(
            rolling_forecast(&p, &t, 6, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            rolling_forecast(&p, &t, 3, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            rolling_forecast(&p, &t, 8, 1),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn negative_outputs_are_clamped_and_counted() {
        let t = ramp(8);
        let g = CellGroup {
            inputs: vec![0],
            outputs: vec![0],
        };
        let mut w = vec![0.0; g.n_targets() * g.n_features()];
        // inflow target = -1 (bias), outflow target = +2 (bias)
        let d = g.n_features();
        w[d - 1] = -1.0;
        w[2 * d - 1] = 2.0;
        let model = RidgeModel::from_parts(0.0, 2, vec![g], vec![w]).unwrap();
        let p = Predictor {
            spec: PredictorSpec::new(PredictorKind::Ridge),
            ridge: Some(model),
        };
        let f = rolling_forecast(&p, &t, 6, 1).unwrap();
        assert_eq!(f.clamped, 1);
        assert_eq!(f.frames[0].inflow[0], 0.0);
        assert_eq!(f.frames[0].outflow[0], 2.0);
        // cell 1 is outside every group and persists
        assert_eq!(f.frames[0].inflow[1], 1.0);
    }

    #[test]
    fn model_binary_round_trip() {
        let t = ramp(12);
        let spec = PredictorSpec::new(PredictorKind::Ridge);
        let groups = vec![
            CellGroup {
                inputs: vec![0, 1],
                outputs: vec![0],
            },
            CellGroup {
                inputs: vec![1],
                outputs: vec![1],
            },
        ];
        let p = train(&spec, &t, 0..12, &groups).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"TPRM");
        assert_eq!(Predictor::from_bytes(&bytes).unwrap(), p);
        assert!(Predictor::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let plain = Predictor::untrained(PredictorSpec::new(PredictorKind::Persistence));
        assert_eq!(Predictor::from_bytes(&plain.to_bytes()).unwrap(), plain);
    }

    #[test]
    fn pruned_rollout_matches_full_rollout_on_targets() {
        // 1x4 strip, chain of groups: each cell reads itself and its west neighbor
        let frames: Vec<_> = (0..30u32)
            .map(|i| {
                (
                    vec![i % 3, (i * 7) % 5, (i * 3) % 4, i % 2],
                    vec![(i + 1) % 4, i % 3, (i * 5) % 7, (i * 2) % 3],
                )
            })
            .collect();
        let t = tensor_from(&frames, 1, 4);
        let groups: Vec<CellGroup> = (0..4)
            .map(|c| CellGroup {
                inputs: (c.max(1) - 1..=c).collect(),
                outputs: vec![c],
            })
            .collect();
        let p = train(
            &PredictorSpec::new(PredictorKind::Ridge),
            &t,
            0..30,
            &groups,
        )
        .unwrap();
        let w = observed_window(&t, 20).unwrap();
        for h in 1..=4 {
            let full = p
                .rollout(w.clone(), &t, 20, h)
                .unwrap()
                .frames
                .pop()
                .unwrap();
            for target in 0..4 {
                let part = p.rollout_frame(w.clone(), &t, 20, h, &[target]).unwrap();
                assert_eq!(part.inflow[target].to_bits(), full.inflow[target].to_bits());
                assert_eq!(
                    part.outflow[target].to_bits(),
                    full.outflow[target].to_bits()
                );
            }
        }
    }
}
