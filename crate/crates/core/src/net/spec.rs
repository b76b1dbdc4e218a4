use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::DEFAULT_PAIRWISE_BUDGET;
use crate::ops::Variant;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub variant: Variant,
    pub input_size: usize,
    pub output_size: usize,
    pub features: usize,
    pub dilation: usize,
    pub neighbors: usize,
}

/// Feature-space edge convolution applied after the last pyramid layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopSpec {
    pub neighbors: usize,
    pub features: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    /// `None` skips the feature-space layer.
    pub top_edgeconv: Option<TopSpec>,
    /// Output width of the pointwise fusion conv; `None` pools the
    /// concatenated features directly.
    pub fusion_width: Option<usize>,
    pub head_hidden: Vec<usize>,
    pub num_classes: usize,
    pub input_points: usize,
    /// Per-point input features are unit normals when set, positions otherwise.
    pub use_normals: bool,
    /// When false every layer searches with dilation 1.
    pub use_dilation: bool,
    /// Upper bound on `N * N` for the feature-space neighbor search.
    pub pairwise_budget: usize,
}

/// Component removed for an ablation run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ablation {
    None,
    Dilation,
    Normals,
    VertexConv,
    FusionConv,
    TopEdgeConv,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::Dilation,
        Ablation::Normals,
        Ablation::VertexConv,
        Ablation::FusionConv,
        Ablation::TopEdgeConv,
        Ablation::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::Dilation => "dilation",
            Ablation::Normals => "normals",
            Ablation::VertexConv => "vertex_conv",
            Ablation::FusionConv => "fusion_conv",
            Ablation::TopEdgeConv => "top_edgeconv",
        }
    }

    pub fn apply(self, spec: &NetworkSpec) -> NetworkSpec {
        let mut s = spec.clone();
        match self {
            Ablation::None => {}
            Ablation::Dilation => {
                s.use_dilation = false;
                for l in &mut s.layers {
                    l.dilation = 1;
                }
            }
            Ablation::Normals => s.use_normals = false,
            Ablation::VertexConv => {
                for l in &mut s.layers {
                    if l.variant == Variant::Vertex {
                        l.variant = Variant::EdgeVertex;
                    }
                }
            }
            Ablation::FusionConv => s.fusion_width = None,
            Ablation::TopEdgeConv => s.top_edgeconv = None,
        }
        s
    }
}

impl Default for NetworkSpec {
    /// The five-level pyramid from 32,768 input points down to 1,024.
    fn default() -> Self {
        let variants = [
            Variant::LocalEdge,
            Variant::EdgeVertex,
            Variant::Vertex,
            Variant::Vertex,
            Variant::Vertex,
        ];
        let features = [32, 32, 64, 64, 64];
        let dilation = [1, 1, 2, 2, 1];
        let layers = (0..5)
            .map(|l| LayerSpec {
                variant: variants[l],
                input_size: 32_768 >> l,
                output_size: 32_768 >> (l + 1),
                features: features[l],
                dilation: dilation[l],
                neighbors: 16,
            })
            .collect();
        Self {
            layers,
            top_edgeconv: Some(TopSpec {
                neighbors: 16,
                features: 128,
            }),
            fusion_width: Some(512),
            head_hidden: vec![512, 256],
            num_classes: 4,
            input_points: 32_768,
            use_normals: true,
            use_dilation: true,
            pairwise_budget: DEFAULT_PAIRWISE_BUDGET,
        }
    }
}

impl NetworkSpec {
    /// Two-layer, 64-point network for fast tests.
    pub fn tiny(num_classes: usize) -> Self {
        Self {
            layers: vec![
                LayerSpec {
                    variant: Variant::LocalEdge,
                    input_size: 64,
                    output_size: 32,
                    features: 8,
                    dilation: 1,
                    neighbors: 4,
                },
                LayerSpec {
                    variant: Variant::EdgeVertex,
                    input_size: 32,
                    output_size: 16,
                    features: 8,
                    dilation: 1,
                    neighbors: 4,
                },
            ],
            top_edgeconv: Some(TopSpec {
                neighbors: 4,
                features: 16,
            }),
            fusion_width: Some(32),
            head_hidden: vec![32, 16],
            num_classes,
            input_points: 64,
            use_normals: true,
            use_dilation: true,
            pairwise_budget: DEFAULT_PAIRWISE_BUDGET,
        }
    }

    /// Same pyramid with every level's point count rescaled so the input has
    /// `input_points` points. Neighbor counts and widths are unchanged.
    pub fn with_input_points(&self, input_points: usize) -> Result<Self> {
        let depth = self.layers.len() as u32;
        if input_points == 0 || input_points % (1usize << depth) != 0 {
            return Err(Error::Spec(format!(
                "{input_points} points cannot be halved {depth} times"
            )));
        }
        let mut s = self.clone();
        s.input_points = input_points;
        for (l, layer) in s.layers.iter_mut().enumerate() {
            layer.input_size = input_points >> l;
            layer.output_size = input_points >> (l + 1);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn final_points(&self) -> usize {
        self.layers.last().map_or(self.input_points, |l| l.output_size)
    }

    pub fn effective_dilation(&self, layer: usize) -> usize {
        if self.use_dilation {
            self.layers[layer].dilation
        } else {
            1
        }
    }

    /// Width of the per-point features concatenated across scales.
    pub fn concat_width(&self) -> usize {
        self.layers.iter().map(|l| l.features).sum::<usize>() + self.top_edgeconv.as_ref().map_or(0, |t| t.features)
    }

    pub fn pooled_width(&self) -> usize {
        self.fusion_width.unwrap_or_else(|| self.concat_width())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.layers.is_empty() {
            return bad("at least one pyramid layer is required".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.layers[0].input_size != self.input_points {
            return bad(format!(
                "first layer takes {} points but input_points is {}",
                self.layers[0].input_size, self.input_points
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.output_size * 2 != layer.input_size {
                return bad(format!(
                    "layer {}: output size {} is not half of input size {}",
                    l + 1,
                    layer.output_size,
                    layer.input_size
                ));
            }
            if l > 0 && layer.input_size != self.layers[l - 1].output_size {
                return bad(format!("layer {}: input size does not chain", l + 1));
            }
            if layer.features == 0 || layer.neighbors == 0 || layer.dilation == 0 {
                return bad(format!("layer {}: zero width, neighbor count or dilation", l + 1));
            }
            if layer.neighbors * self.effective_dilation(l) >= layer.output_size {
                return bad(format!(
                    "layer {}: neighbors x dilation must be below the output size {}",
                    l + 1,
                    layer.output_size
                ));
            }
        }
        if let Some(top) = &self.top_edgeconv {
            if top.features == 0 || top.neighbors == 0 || top.neighbors >= self.final_points() {
                return bad("top edge conv needs features > 0 and fewer neighbors than points".into());
            }
            if self.final_points().saturating_mul(self.final_points()) > self.pairwise_budget {
                return bad("final point count exceeds the pairwise budget".into());
            }
        }
        if self.fusion_width == Some(0) || self.head_hidden.contains(&0) {
            return bad("zero-width fusion or head stage".into());
        }
        Ok(())
    }
}
