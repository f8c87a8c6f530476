use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `same` convolution with ReLU followed by a `pool × pool` max pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderStage {
    pub kernel: usize,
    pub channels: usize,
    pub pool: usize,
}

/// Transpose convolution with kernel and stride `factor`, then ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderStage {
    pub factor: usize,
    pub channels: usize,
}

/// Encoder, dense block and decoder dimensions.
///
/// The dense block maps the flattened bottleneck of width `F` either
/// through one `F → F` layer (`adaptive == 0`) or through `F → n → F`
/// with a ReLU after the `n`-wide layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub input_size: usize,
    pub encoder: Vec<EncoderStage>,
    pub adaptive: usize,
    pub decoder: Vec<DecoderStage>,
}

/// Name and shape of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl NetworkProfile {
    /// 100 × 100 input, channels 64/256/512, pools 2/2/5, decoder 5/2/2.
    pub fn paper(adaptive: usize) -> Self {
        Self::build(100, [64, 256, 512], adaptive, [256, 64, 1])
    }

    /// 40 × 40 input, channels 16/32/64, pools 2/2/5, decoder 5/2/2.
    pub fn small(adaptive: usize) -> Self {
        Self::build(40, [16, 32, 64], adaptive, [32, 16, 1])
    }

    fn build(r: usize, enc: [usize; 3], adaptive: usize, dec: [usize; 3]) -> Self {
        let pools = [2, 2, 5];
        let factors = [5, 2, 2];
        Self {
            input_size: r,
            encoder: (0..3)
                .map(|i| EncoderStage {
                    kernel: 3,
                    channels: enc[i],
                    pool: pools[i],
                })
                .collect(),
            adaptive,
            decoder: (0..3)
                .map(|i| DecoderStage {
                    factor: factors[i],
                    channels: dec[i],
                })
                .collect(),
        }
    }

    /// Reads a JSON profile.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        p.validate()?;
        Ok(p)
    }

    pub fn with_adaptive(&self, n: usize) -> Self {
        Self {
            adaptive: n,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("network profile: {m}")));
        if self.input_size == 0 || self.encoder.is_empty() || self.decoder.is_empty() {
            return bad("need a positive input size and at least one encoder and decoder stage".into());
        }
        let mut side = self.input_size;
        for (i, s) in self.encoder.iter().enumerate() {
            if s.kernel % 2 == 0 || s.channels == 0 || s.pool == 0 {
                return bad(format!("encoder stage {i} needs an odd kernel and positive channels/pool"));
            }
            if !side.is_multiple_of(s.pool) {
                return bad(format!("side {side} at encoder stage {i} not divisible by pool {}", s.pool));
            }
            side /= s.pool;
        }
        let mut up = side;
        for (i, s) in self.decoder.iter().enumerate() {
            if s.factor == 0 || s.channels == 0 {
                return bad(format!("decoder stage {i} needs positive factor and channels"));
            }
            up *= s.factor;
        }
        if up != self.input_size {
            return bad(format!("decoder maps side {side} to {up}, not {}", self.input_size));
        }
        if self.decoder.last().map(|s| s.channels) != Some(1) {
            return bad("last decoder stage must have one channel".into());
        }
        Ok(())
    }

    /// Side length of the encoder output.
    pub fn bottleneck_side(&self) -> usize {
        self.encoder.iter().fold(self.input_size, |s, e| s / e.pool)
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.encoder.last().map_or(1, |e| e.channels)
    }

    /// Flatten width `F`.
    pub fn flatten_width(&self) -> usize {
        self.bottleneck_side().pow(2) * self.bottleneck_channels()
    }

    /// Weights and biases of the dense block.
    pub fn dense_block_params(&self) -> usize {
        let f = self.flatten_width();
        match self.adaptive {
            0 => f * f + f,
            n => f * n + n + n * f + f,
        }
    }

    /// Total parameter count, computed without materializing tensors.
    pub fn param_count(&self) -> usize {
        self.tensor_specs().iter().map(TensorSpec::len).sum()
    }

    /// Parameter tensors in storage order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let spec = |name: String, shape: Vec<usize>| TensorSpec { name, shape };
        let mut out = Vec::new();
        let mut cin = 1;
        for (i, s) in self.encoder.iter().enumerate() {
            out.push(spec(format!("enc{i}.weight"), vec![s.kernel, s.kernel, cin, s.channels]));
            out.push(spec(format!("enc{i}.bias"), vec![s.channels]));
            cin = s.channels;
        }
        let f = self.flatten_width();
        let widths: Vec<usize> = match self.adaptive {
            0 => vec![f, f],
            n => vec![f, n, f],
        };
        for (i, w) in widths.windows(2).enumerate() {
            out.push(spec(format!("dense{i}.weight"), vec![w[1], w[0]]));
            out.push(spec(format!("dense{i}.bias"), vec![w[1]]));
        }
        for (i, s) in self.decoder.iter().enumerate() {
            out.push(spec(format!("dec{i}.weight"), vec![s.factor, s.factor, cin, s.channels]));
            out.push(spec(format!("dec{i}.bias"), vec![s.channels]));
            cin = s.channels;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_profiles_are_valid() {
        for p in [NetworkProfile::paper(0), NetworkProfile::small(64)] {
            p.validate().unwrap();
        }
        assert_eq!(NetworkProfile::paper(0).flatten_width(), 12800);
        assert_eq!(NetworkProfile::small(64).flatten_width(), 256);
    }

    #[test]
    fn indivisible_side_rejected() {
        let mut p = NetworkProfile::small(0);
        p.input_size = 42;
        assert!(p.validate().is_err());
    }
}
