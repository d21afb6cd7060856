use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;

/// Model-size presets: (stacked layers, hidden dimension).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    S,
    M,
    L,
}

impl Preset {
    pub fn layers(self) -> usize {
        match self {
            Preset::S => 3,
            Preset::M => 4,
            Preset::L => 5,
        }
    }

    pub fn hidden(self) -> usize {
        match self {
            Preset::S => 128,
            Preset::M => 256,
            Preset::L => 512,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" => Ok(Preset::S),
            "M" => Ok(Preset::M),
            "L" => Ok(Preset::L),
            other => Err(format!("unknown preset {other:?} (expected S, M or L)")),
        }
    }
}

/// How the local module applies its degree matrix `M`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalNorm {
    /// `X = M F`.
    DirectM,
    /// `X = M^{-1} F`.
    #[default]
    InverseM,
}

impl std::str::FromStr for LocalNorm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "direct_M" | "direct_m" | "direct-m" => Ok(LocalNorm::DirectM),
            "inverse_M" | "inverse_m" | "inverse-m" => Ok(LocalNorm::InverseM),
            other => Err(format!("unknown local norm {other:?} (expected direct_M or inverse_M)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "sum" => Ok(Aggregation::Sum),
            "mean" => Ok(Aggregation::Mean),
            other => Err(format!("unknown aggregation {other:?} (expected sum or mean)")),
        }
    }
}

/// Granularity of the softmax fusion weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    PerNode,
    /// One weight triple per sample, from node-averaged logits.
    PerLayer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: Option<Preset>,
    pub layers: usize,
    pub hidden: usize,
    /// Hours of PM2.5 history per node input.
    pub window: usize,
    pub local_norm: LocalNorm,
    pub aggregation: Aggregation,
    pub fusion: FusionMode,
    /// Nonlinearity inside the diffusion and local graph convolutions.
    pub gcn_activation: Activation,
}

impl ModelConfig {
    pub fn preset(preset: Preset) -> Self {
        Self {
            preset: Some(preset),
            layers: preset.layers(),
            hidden: preset.hidden(),
            window: 1,
            local_norm: LocalNorm::default(),
            aggregation: Aggregation::default(),
            fusion: FusionMode::default(),
            gcn_activation: Activation::Relu,
        }
    }

    /// Non-preset size, used for small experiments and gradient checks.
    pub fn custom(layers: usize, hidden: usize) -> Self {
        Self { preset: None, layers, hidden, ..Self::preset(Preset::S) }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    /// Node input width: `window` readings plus the observed flag.
    pub fn input_dim(&self) -> usize {
        self.window + 1
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.layers == 0 || self.hidden == 0 || self.window == 0 {
            return Err(format!(
                "layers ({}), hidden ({}) and window ({}) must be positive",
                self.layers, self.hidden, self.window
            ));
        }
        if let Some(p) = self.preset {
            if p.layers() != self.layers || p.hidden() != self.hidden {
                return Err(format!("preset {p:?} requires {} layers / {} hidden", p.layers(), p.hidden()));
            }
        }
        Ok(())
    }
}
