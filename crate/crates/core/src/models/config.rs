use crate::dsp::N_BINS;
use crate::nn::window_output_len;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    SingleDnn,
    SingleBilstm,
    Bimodal,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::SingleDnn, ModelKind::SingleBilstm, ModelKind::Bimodal];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SingleDnn => "single_dnn",
            ModelKind::SingleBilstm => "single_bilstm",
            ModelKind::Bimodal => "bimodal",
        }
    }

    pub fn is_recurrent(self) -> bool {
        !matches!(self, ModelKind::SingleDnn)
    }

    pub fn uses_images(self) -> bool {
        matches!(self, ModelKind::Bimodal)
    }

    fn code(self) -> u32 {
        match self {
            ModelKind::SingleDnn => 0,
            ModelKind::SingleBilstm => 1,
            ModelKind::Bimodal => 2,
        }
    }

    fn from_code(c: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == c)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_dnn" => Ok(ModelKind::SingleDnn),
            "single_bilstm" => Ok(ModelKind::SingleBilstm),
            "bimodal" | "bimodal_bilstm" => Ok(ModelKind::Bimodal),
            other => Err(Error::invalid(format!(
                "unknown model kind {other:?} (expected single_dnn, single_bilstm or bimodal)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One convolution + pooling stage of the image extractor (convolution stride is 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvStageConfig {
    pub channels: usize,
    pub kernel: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
}

/// Layer dimensions for one of the three architectures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Per-frame audio feature dimension (PCA output).
    pub audio_dim: usize,
    /// Frames stacked per network input (odd; centre frame is predicted).
    pub frames_per_window: usize,
    pub audio_hidden: Vec<usize>,
    pub audio_out_dim: usize,
    pub image_size: usize,
    pub cnn_stages: Vec<ConvStageConfig>,
    pub image_hidden: Vec<usize>,
    pub image_out_dim: usize,
    pub lstm_hidden: usize,
    /// Extra hidden layers of the feed-forward head.
    pub dnn_head_hidden: Vec<usize>,
    pub output_dim: usize,
}

const fn stage(channels: usize, kernel: usize, pool_kernel: usize, pool_stride: usize) -> ConvStageConfig {
    ConvStageConfig {
        channels,
        kernel,
        pool_kernel,
        pool_stride,
    }
}

impl ModelConfig {
    /// Full-size dimensions: audio DNN 100n-500-300-outdim, 64×64 lips through
    /// the three-stage CNN, BiLSTM 400→200, 161 output bins.
    pub fn standard(kind: ModelKind) -> Self {
        let (n, audio_out, image_out, head) = match kind {
            ModelKind::SingleDnn => (11, 400, 0, vec![1000, 500]),
            ModelKind::SingleBilstm => (1, 400, 0, vec![]),
            ModelKind::Bimodal => (1, 350, 50, vec![]),
        };
        let uses_images = kind.uses_images();
        Self {
            kind,
            audio_dim: 100,
            frames_per_window: n,
            audio_hidden: vec![500, 300],
            audio_out_dim: audio_out,
            image_size: if uses_images { 64 } else { 0 },
            cnn_stages: if uses_images {
                vec![stage(8, 5, 5, 2), stage(16, 3, 3, 2), stage(32, 3, 3, 2)]
            } else {
                vec![]
            },
            image_hidden: if uses_images { vec![500, 300] } else { vec![] },
            image_out_dim: image_out,
            lstm_hidden: 200,
            dnn_head_hidden: head,
            output_dim: N_BINS,
        }
    }

    /// Scaled-down dimensions for gradient checking: 16×16 images, PCA 10,
    /// hidden widths divided by about eight.
    pub fn reduced(kind: ModelKind) -> Self {
        let (n, audio_out, image_out, head) = match kind {
            ModelKind::SingleDnn => (11, 50, 0, vec![125, 62]),
            ModelKind::SingleBilstm => (1, 50, 0, vec![]),
            ModelKind::Bimodal => (1, 44, 6, vec![]),
        };
        let uses_images = kind.uses_images();
        Self {
            kind,
            audio_dim: 10,
            frames_per_window: n,
            audio_hidden: vec![62, 37],
            audio_out_dim: audio_out,
            image_size: if uses_images { 16 } else { 0 },
            cnn_stages: if uses_images {
                vec![stage(1, 3, 2, 2), stage(2, 2, 2, 2), stage(4, 2, 2, 1)]
            } else {
                vec![]
            },
            image_hidden: if uses_images { vec![62, 37] } else { vec![] },
            image_out_dim: image_out,
            lstm_hidden: 25,
            dnn_head_hidden: head,
            output_dim: 20,
        }
    }

    pub fn audio_input_dim(&self) -> usize {
        self.audio_dim * self.frames_per_window
    }

    pub fn lstm_input_dim(&self) -> usize {
        self.audio_out_dim + if self.kind.uses_images() { self.image_out_dim } else { 0 }
    }

    /// Spatial side lengths after each conv and pool, starting from the image.
    pub fn cnn_shape_chain(&self) -> Result<Vec<usize>> {
        let mut side = self.image_size;
        let mut chain = vec![side];
        for s in &self.cnn_stages {
            side = window_output_len(side, s.kernel, 1)?;
            chain.push(side);
            side = window_output_len(side, s.pool_kernel, s.pool_stride)?;
            chain.push(side);
        }
        Ok(chain)
    }

    /// Flattened CNN feature size fed to the first image FC layer.
    pub fn cnn_flat_dim(&self) -> Result<usize> {
        let side = *self.cnn_shape_chain()?.last().unwrap_or(&0);
        let channels = self.cnn_stages.last().map_or(0, |s| s.channels);
        Ok(side * side * channels)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.audio_dim == 0 || self.output_dim == 0 || self.audio_out_dim == 0 {
            return bad("model dimensions must be positive".into());
        }
        if self.audio_hidden.iter().chain(&self.image_hidden).chain(&self.dnn_head_hidden).any(|&d| d == 0) {
            return bad("hidden layer widths must be positive".into());
        }
        match self.kind {
            ModelKind::SingleDnn => {
                if self.frames_per_window % 2 == 0 {
                    return bad(format!("single_dnn needs an odd window, got {}", self.frames_per_window));
                }
            }
            ModelKind::SingleBilstm | ModelKind::Bimodal => {
                if self.frames_per_window != 1 {
                    return bad(format!(
                        "recurrent models take one frame per step, got {}",
                        self.frames_per_window
                    ));
                }
                if self.lstm_hidden == 0 {
                    return bad("lstm_hidden must be positive".into());
                }
            }
        }
        if self.kind.uses_images() {
            if self.cnn_stages.is_empty() || self.image_out_dim == 0 {
                return bad("bimodal model needs an image extractor".into());
            }
            if self.cnn_flat_dim()? == 0 {
                return bad("image extractor collapses to zero features".into());
            }
        }
        Ok(())
    }

    pub(crate) fn encode(&self) -> Vec<u32> {
        let mut v = vec![
            self.kind.code(),
            self.audio_dim as u32,
            self.frames_per_window as u32,
        ];
        let push_list = |v: &mut Vec<u32>, xs: &[usize]| {
            v.push(xs.len() as u32);
            v.extend(xs.iter().map(|&x| x as u32));
        };
        push_list(&mut v, &self.audio_hidden);
        v.push(self.audio_out_dim as u32);
        v.push(self.image_size as u32);
        v.push(self.cnn_stages.len() as u32);
        for s in &self.cnn_stages {
            v.extend([s.channels, s.kernel, s.pool_kernel, s.pool_stride].map(|x| x as u32));
        }
        push_list(&mut v, &self.image_hidden);
        v.push(self.image_out_dim as u32);
        v.push(self.lstm_hidden as u32);
        push_list(&mut v, &self.dnn_head_hidden);
        v.push(self.output_dim as u32);
        v
    }

    pub(crate) fn decode(words: &[u32]) -> Result<Self> {
        let mut it = words.iter().map(|&w| w as usize);
        let mut next = || it.next().ok_or_else(|| Error::format("checkpoint config", "truncated config block"));
        let kind = ModelKind::from_code(next()? as u32)
            .ok_or_else(|| Error::format("checkpoint config", "unknown model kind"))?;
        let audio_dim = next()?;
        let frames_per_window = next()?;
        let list = |next: &mut dyn FnMut() -> Result<usize>| -> Result<Vec<usize>> {
            let n = next()?;
            (0..n).map(|_| next()).collect()
        };
        let audio_hidden = list(&mut next)?;
        let audio_out_dim = next()?;
        let image_size = next()?;
        let n_stages = next()?;
        let mut cnn_stages = Vec::with_capacity(n_stages);
        for _ in 0..n_stages {
            cnn_stages.push(stage(next()?, next()?, next()?, next()?));
        }
        let image_hidden = list(&mut next)?;
        let image_out_dim = next()?;
        let lstm_hidden = next()?;
        let dnn_head_hidden = list(&mut next)?;
        let output_dim = next()?;
        let config = Self {
            kind,
            audio_dim,
            frames_per_window,
            audio_hidden,
            audio_out_dim,
            image_size,
            cnn_stages,
            image_hidden,
            image_out_dim,
            lstm_hidden,
            dnn_head_hidden,
            output_dim,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_dimensions() {
        let dnn = ModelConfig::standard(ModelKind::SingleDnn);
        assert_eq!(dnn.audio_input_dim(), 1100);
        let bi = ModelConfig::standard(ModelKind::Bimodal);
        assert_eq!(bi.lstm_input_dim(), 400);
        assert_eq!(ModelConfig::standard(ModelKind::SingleBilstm).lstm_input_dim(), 400);
        assert_eq!(bi.cnn_shape_chain().unwrap(), vec![64, 60, 28, 26, 12, 10, 4]);
        assert_eq!(bi.cnn_flat_dim().unwrap(), 512);
        for kind in ModelKind::ALL {
            ModelConfig::standard(kind).validate().unwrap();
            ModelConfig::reduced(kind).validate().unwrap();
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        for kind in ModelKind::ALL {
            let c = ModelConfig::standard(kind);
            assert_eq!(ModelConfig::decode(&c.encode()).unwrap(), c);
        }
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        let mut c = ModelConfig::standard(ModelKind::SingleBilstm);
        c.frames_per_window = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::standard(ModelKind::Bimodal);
        c.image_size = 20;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::standard(ModelKind::SingleDnn);
        c.frames_per_window = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kind_names_parse() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("lstm".parse::<ModelKind>().is_err());
    }
}
