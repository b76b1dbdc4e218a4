use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::neighbors::{knn_feature, knn_spatial, NeighborIndex};
use crate::ops::{
    global_maxpool, global_maxpool_backward, Head, HeadTape, Learnable, Mode, PairConv, PairConvTape, PairInput,
    PointConv, PointConvTape, Variant, DROPOUT,
};
use crate::rng::Rng;

/// Input features are 3-vectors (normals or positions).
const INPUT_FEATURES: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: NetworkSpec,
    pub layers: Vec<PairConv>,
    pub top: Option<PairConv>,
    pub fusion: Option<PointConv>,
    pub head: Head,
}

struct TopTape {
    neighbors: Vec<NeighborIndex>,
    tape: PairConvTape,
}

/// Everything the backward pass needs from one batched forward pass.
pub struct Tape {
    positions: Vec<Vec<[f64; 3]>>,
    position_rows: Vec<Array2<f64>>,
    inputs: Vec<Array2<f64>>,
    /// `[layer][sample]`
    spatial: Vec<Vec<NeighborIndex>>,
    /// `[layer][sample]`, one row per input point of that layer.
    outputs: Vec<Vec<Array2<f64>>>,
    layer_tapes: Vec<PairConvTape>,
    top: Option<TopTape>,
    concat: Vec<Array2<f64>>,
    fusion: Option<PointConvTape>,
    pool_arg: Vec<Vec<usize>>,
    pooled: Array2<f64>,
    head: HeadTape,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.inputs.len()
    }

    /// Positions seen by `layer` for one sample (the layer's input points).
    pub fn layer_positions(&self, layer: usize, sample: usize) -> &[[f64; 3]] {
        let n = self.spatial[layer][sample].len();
        &self.positions[sample][..n]
    }

    pub fn spatial_neighbors(&self, layer: usize, sample: usize) -> &NeighborIndex {
        &self.spatial[layer][sample]
    }

    pub fn layer_output(&self, layer: usize, sample: usize) -> ArrayView2<'_, f64> {
        self.outputs[layer][sample].view()
    }

    /// Concatenated multiscale features before fusion.
    pub fn concatenated(&self, sample: usize) -> ArrayView2<'_, f64> {
        self.concat[sample].view()
    }

    /// Globally pooled features, one row per sample.
    pub fn pooled(&self) -> ArrayView2<'_, f64> {
        self.pooled.view()
    }

    pub fn head(&self) -> &HeadTape {
        &self.head
    }
}

/// First `m` rows of a feature map.
pub fn gather_prefix(features: ArrayView2<'_, f64>, m: usize) -> Result<ArrayView2<'_, f64>> {
    if m == 0 || m > features.nrows() {
        return Err(Error::Shape(format!(
            "cannot gather {m} rows from a map with {} rows",
            features.nrows()
        )));
    }
    Ok(features.slice_move(s![..m, ..]))
}

fn at_stage(stage: String) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { stage: inner } => Error::NonFinite {
            stage: format!("{stage}: {inner}"),
        },
        other => other,
    }
}

fn layer_inputs<'a>(
    spec: &NetworkSpec,
    l: usize,
    inputs: &'a [Array2<f64>],
    position_rows: &'a [Array2<f64>],
    outputs: &'a [Vec<Array2<f64>>],
    spatial: &'a [Vec<NeighborIndex>],
) -> Vec<PairInput<'a>> {
    let n = spec.layers[l].input_size;
    (0..inputs.len())
        .map(|b| PairInput {
            features: if l == 0 {
                inputs[b].view()
            } else {
                outputs[l - 1][b].slice(s![..n, ..])
            },
            positions: Some(position_rows[b].slice(s![..n, ..])),
            neighbors: &spatial[l][b],
        })
        .collect()
}

impl Model {
    /// Builds a model with fan-in uniform initialization.
    pub fn build(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut width = INPUT_FEATURES;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            layers.push(PairConv::new(layer.variant, width, layer.features, rng));
            width = layer.features;
        }
        let top = spec
            .top_edgeconv
            .as_ref()
            .map(|t| PairConv::new(Variant::Edge, width, t.features, rng));
        let fusion = spec.fusion_width.map(|w| PointConv::new(spec.concat_width(), w, rng));
        let head = Head::new(spec.pooled_width(), &spec.head_hidden, spec.num_classes, DROPOUT, rng);
        Ok(Self {
            spec,
            layers,
            top,
            fusion,
            head,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Same architecture with every tensor and buffer zeroed; used as a
    /// gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self.layers.iter().map(PairConv::zeros_like).collect(),
            top: self.top.as_ref().map(PairConv::zeros_like),
            fusion: self.fusion.as_ref().map(PointConv::zeros_like),
            head: self.head.zeros_like(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Logits (1 x C) for one cloud; `rng` drives the input shuffle and,
    /// in train mode, dropout.
    pub fn forward(&self, pc: &PointCloud, mode: Mode, rng: &mut Rng) -> Result<Array2<f64>> {
        let (logits, _) = self.forward_batch(&[pc], mode, std::slice::from_mut(rng))?;
        Ok(logits)
    }

    /// Forward with an explicit input ordering instead of a random shuffle:
    /// `order[i]` is the source row placed at position `i`.
    pub fn forward_ordered(&self, pc: &PointCloud, order: &[usize], mode: Mode, rng: &mut Rng) -> Result<Array2<f64>> {
        let (logits, _) = self.forward_prepared(&[(pc, order.to_vec())], mode, std::slice::from_mut(rng))?;
        Ok(logits)
    }

    /// Batched forward; `rngs[b]` drives sample `b`. Normalization statistics
    /// in train mode span the whole batch.
    pub fn forward_batch(&self, clouds: &[&PointCloud], mode: Mode, rngs: &mut [Rng]) -> Result<(Array2<f64>, Tape)> {
        if clouds.len() != rngs.len() || clouds.is_empty() {
            return Err(Error::Shape(format!(
                "{} clouds but {} rngs",
                clouds.len(),
                rngs.len()
            )));
        }
        let mut prepared = Vec::with_capacity(clouds.len());
        for (pc, rng) in clouds.iter().zip(rngs.iter_mut()) {
            if pc.len() < self.spec.input_points {
                return Err(Error::InvalidCloud(format!(
                    "cloud has {} points, the network needs {}",
                    pc.len(),
                    self.spec.input_points
                )));
            }
            prepared.push((*pc, rng.permutation(pc.len())));
        }
        self.forward_prepared(&prepared, mode, rngs)
    }

    fn forward_prepared(
        &self,
        prepared: &[(&PointCloud, Vec<usize>)],
        mode: Mode,
        rngs: &mut [Rng],
    ) -> Result<(Array2<f64>, Tape)> {
        let spec = &self.spec;
        let n0 = spec.input_points;
        let batch = prepared.len();

        let mut positions = Vec::with_capacity(batch);
        let mut position_rows = Vec::with_capacity(batch);
        let mut inputs = Vec::with_capacity(batch);
        for (pc, order) in prepared {
            if order.len() < n0 || pc.len() < n0 {
                return Err(Error::InvalidCloud(format!(
                    "cloud has {} points, the network needs {n0}",
                    pc.len()
                )));
            }
            let pos: Vec<[f64; 3]> = order[..n0].iter().map(|&i| pc.position(i)).collect();
            let rows = Array2::from_shape_fn((n0, 3), |(i, c)| pos[i][c]);
            let feats = if spec.use_normals {
                Array2::from_shape_fn((n0, 3), |(i, c)| pc.normal(order[i])[c])
            } else {
                rows.clone()
            };
            positions.push(pos);
            position_rows.push(rows);
            inputs.push(feats);
        }

        let jobs: Vec<(usize, usize)> = (0..spec.layers.len())
            .flat_map(|l| (0..batch).map(move |b| (l, b)))
            .collect();
        let tables: Vec<NeighborIndex> = jobs
            .par_iter()
            .map(|&(l, b)| {
                let layer = &spec.layers[l];
                knn_spatial(
                    &positions[b][..layer.input_size],
                    layer.neighbors,
                    spec.effective_dilation(l),
                )
            })
            .collect::<Result<_>>()?;
        let mut spatial: Vec<Vec<NeighborIndex>> = Vec::with_capacity(spec.layers.len());
        let mut tables = tables.into_iter();
        for _ in 0..spec.layers.len() {
            spatial.push(tables.by_ref().take(batch).collect());
        }

        let mut outputs: Vec<Vec<Array2<f64>>> = Vec::with_capacity(spec.layers.len());
        let mut layer_tapes = Vec::with_capacity(spec.layers.len());
        for (l, conv) in self.layers.iter().enumerate() {
            let (out, tape) = {
                let ins = layer_inputs(spec, l, &inputs, &position_rows, &outputs, &spatial);
                conv.forward(&ins, mode).map_err(at_stage(format!("layer {}", l + 1)))?
            };
            outputs.push(out);
            layer_tapes.push(tape);
        }

        let m = spec.final_points();
        let last = outputs.last().expect("at least one layer");
        let (top, top_outputs) = match (&self.top, &spec.top_edgeconv) {
            (Some(conv), Some(t)) => {
                let neighbors: Vec<NeighborIndex> = last
                    .par_iter()
                    .map(|x| knn_feature(x.slice(s![..m, ..]), t.neighbors, spec.pairwise_budget))
                    .collect::<Result<_>>()?;
                let ins: Vec<PairInput<'_>> = last
                    .iter()
                    .zip(&neighbors)
                    .map(|(x, nb)| PairInput {
                        features: x.slice(s![..m, ..]),
                        positions: None,
                        neighbors: nb,
                    })
                    .collect();
                let (out, tape) = conv.forward(&ins, mode).map_err(at_stage("top edge conv".into()))?;
                (Some(TopTape { neighbors, tape }), out)
            }
            _ => (None, Vec::new()),
        };

        let concat_width = spec.concat_width();
        let concat: Vec<Array2<f64>> = (0..batch)
            .map(|b| {
                let mut cat = Array2::zeros((m, concat_width));
                let mut col = 0;
                for out in &outputs {
                    let w = out[b].ncols();
                    cat.slice_mut(s![.., col..col + w]).assign(&out[b].slice(s![..m, ..]));
                    col += w;
                }
                if let Some(t) = top_outputs.get(b) {
                    cat.slice_mut(s![.., col..]).assign(t);
                }
                cat
            })
            .collect();

        let (fused, fusion) = match &self.fusion {
            Some(conv) => {
                let views: Vec<ArrayView2<'_, f64>> = concat.iter().map(|c| c.view()).collect();
                let (out, tape) = conv.forward(&views, mode).map_err(at_stage("fusion conv".into()))?;
                (Some(out), Some(tape))
            }
            None => (None, None),
        };
        let pool_src: &[Array2<f64>] = fused.as_deref().unwrap_or(&concat);
        let mut pooled = Array2::zeros((batch, spec.pooled_width()));
        let mut pool_arg = Vec::with_capacity(batch);
        for (b, x) in pool_src.iter().enumerate() {
            let (v, arg) = global_maxpool(x.view())?;
            pooled.row_mut(b).assign(&v);
            pool_arg.push(arg);
        }

        let (logits, head) = self
            .head
            .forward(pooled.view(), mode, rngs)
            .map_err(at_stage("classifier head".into()))?;

        Ok((
            logits,
            Tape {
                positions,
                position_rows,
                inputs,
                spatial,
                outputs,
                layer_tapes,
                top,
                concat,
                fusion,
                pool_arg,
                pooled,
                head,
            },
        ))
    }

    /// Parameter gradients given the loss gradient w.r.t. the logits.
    pub fn backward(&self, tape: &Tape, grad_logits: ArrayView2<'_, f64>) -> Model {
        let spec = &self.spec;
        let batch = tape.batch_size();
        let m = spec.final_points();
        let mut grads = self.zeros_like();

        let (g_head, g_pooled) = self.head.backward(&tape.head, grad_logits);
        grads.head = g_head;

        let g_pool_src: Vec<Array2<f64>> = (0..batch)
            .map(|b| {
                let g = g_pooled.row(b);
                global_maxpool_backward(m, &tape.pool_arg[b], g.as_slice().expect("row-major"))
            })
            .collect();
        let g_concat = match (&self.fusion, &tape.fusion) {
            (Some(conv), Some(ftape)) => {
                let views: Vec<ArrayView2<'_, f64>> = tape.concat.iter().map(|c| c.view()).collect();
                let gviews: Vec<ArrayView2<'_, f64>> = g_pool_src.iter().map(|g| g.view()).collect();
                let (g_conv, g_in) = conv.backward(&views, ftape, &gviews);
                grads.fusion = Some(g_conv);
                g_in
            }
            _ => g_pool_src,
        };

        let last = spec.layers.len() - 1;
        let mut col = 0;
        let mut g_outputs: Vec<Vec<Array2<f64>>> = spec
            .layers
            .iter()
            .map(|layer| {
                let w = layer.features;
                let g = (0..batch)
                    .map(|b| {
                        let mut g = Array2::zeros((layer.input_size, w));
                        g.slice_mut(s![..m, ..]).assign(&g_concat[b].slice(s![.., col..col + w]));
                        g
                    })
                    .collect();
                col += w;
                g
            })
            .collect();

        if let (Some(conv), Some(ttape)) = (&self.top, &tape.top) {
            let ins: Vec<PairInput<'_>> = tape.outputs[last]
                .iter()
                .zip(&ttape.neighbors)
                .map(|(x, nb)| PairInput {
                    features: x.slice(s![..m, ..]),
                    positions: None,
                    neighbors: nb,
                })
                .collect();
            let g_top: Vec<ArrayView2<'_, f64>> = g_concat.iter().map(|g| g.slice(s![.., col..])).collect();
            let (g_conv, g_x) = conv.backward(&ins, &ttape.tape, &g_top);
            grads.top = Some(g_conv);
            for (g, gx) in g_outputs[last].iter_mut().zip(g_x) {
                let mut head_rows = g.slice_mut(s![..m, ..]);
                head_rows += &gx;
            }
        }

        for l in (0..spec.layers.len()).rev() {
            let ins = layer_inputs(
                spec,
                l,
                &tape.inputs,
                &tape.position_rows,
                &tape.outputs,
                &tape.spatial,
            );
            let gviews: Vec<ArrayView2<'_, f64>> = g_outputs[l].iter().map(|g| g.view()).collect();
            let (g_conv, g_x) = self.layers[l].backward(&ins, &tape.layer_tapes[l], &gviews);
            grads.layers[l] = g_conv;
            if l > 0 {
                let n = spec.layers[l].input_size;
                for (g, gx) in g_outputs[l - 1].iter_mut().zip(g_x) {
                    let mut rows = g.slice_mut(s![..n, ..]);
                    rows += &gx;
                }
            }
        }
        grads
    }

    /// Folds the batch statistics recorded in `tape` into the running
    /// normalization buffers.
    pub fn update_running_stats(&mut self, tape: &Tape) {
        for (conv, t) in self.layers.iter_mut().zip(&tape.layer_tapes) {
            conv.update_running(t);
        }
        if let (Some(conv), Some(t)) = (self.top.as_mut(), tape.top.as_ref()) {
            conv.update_running(&t.tape);
        }
        if let (Some(conv), Some(t)) = (self.fusion.as_mut(), tape.fusion.as_ref()) {
            conv.update_running(t);
        }
        self.head.update_running(&tape.head);
    }

    /// Predicted class per row of a logits matrix (lowest index on ties).
    pub fn argmax(logits: ArrayView2<'_, f64>) -> Vec<usize> {
        logits
            .axis_iter(Axis(0))
            .map(|row| {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

fn prefixed<'a>(prefix: &str, items: Vec<(String, &'a [f64])>) -> impl Iterator<Item = (String, &'a [f64])> + 'a {
    let prefix = prefix.to_string();
    items.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t))
}

impl Learnable for Model {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, conv) in self.layers.iter().enumerate() {
            out.extend(prefixed(&format!("layer{}", l + 1), conv.tensors()));
        }
        if let Some(conv) = &self.top {
            out.extend(prefixed("top", conv.tensors()));
        }
        if let Some(conv) = &self.fusion {
            out.extend(prefixed("fusion", conv.tensors()));
        }
        out.extend(prefixed("head", self.head.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for conv in &mut self.layers {
            out.extend(conv.tensors_mut());
        }
        if let Some(conv) = &mut self.top {
            out.extend(conv.tensors_mut());
        }
        if let Some(conv) = &mut self.fusion {
            out.extend(conv.tensors_mut());
        }
        out.extend(self.head.tensors_mut());
        out
    }

    fn buffers(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, conv) in self.layers.iter().enumerate() {
            out.extend(prefixed(&format!("layer{}", l + 1), conv.buffers()));
        }
        if let Some(conv) = &self.top {
            out.extend(prefixed("top", conv.buffers()));
        }
        if let Some(conv) = &self.fusion {
            out.extend(prefixed("fusion", conv.buffers()));
        }
        out.extend(prefixed("head", self.head.buffers()));
        out
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for conv in &mut self.layers {
            out.extend(conv.buffers_mut());
        }
        if let Some(conv) = &mut self.top {
            out.extend(conv.buffers_mut());
        }
        if let Some(conv) = &mut self.fusion {
            out.extend(conv.buffers_mut());
        }
        out.extend(self.head.buffers_mut());
        out
    }
}
