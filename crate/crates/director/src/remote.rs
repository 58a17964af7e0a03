//! Score provider that forwards renders to the director endpoint under the
//! `score` task, where a real diffusion model can answer.

use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use c3v_core::composer::{GuidanceSample, ScoreProvider};
use c3v_core::{Error as CoreError, Framebuffer};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::protocol::{parse_json, DirectorRequest, Task};
use crate::transport::Transport;

/// Payload of a `score` answer. Residuals are base64 little-endian f32,
/// interleaved RGB row-major for `residual`, one value per pixel for `mask`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePayload {
    #[serde(default = "one")]
    pub weight: f64,
    pub residual: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_residual: Option<String>,
}

fn one() -> f64 {
    1.0
}

pub fn encode_f32(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f32(text: &str) -> Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text.trim()).map_err(|e| e.to_string())?;
    if bytes.len() % 4 != 0 {
        return Err(format!("{} bytes is not a whole number of f32 values", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub struct RemoteScoreProvider {
    transport: Arc<dyn Transport>,
}

impl RemoteScoreProvider {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport }
    }
}

impl ScoreProvider for RemoteScoreProvider {
    fn name(&self) -> &str {
        "remote"
    }

    fn guidance(&self, image: &Framebuffer, prompt: &str, noise_level: f64, seed: u64) -> c3v_core::Result<GuidanceSample> {
        let png = image.to_png()?;
        let mut req = DirectorRequest::new(Task::Score, prompt, "");
        req.image_png = Some(STANDARD.encode(png));
        req.image_size = Some([image.width, image.height]);
        req.context = json!({ "noise_level": noise_level, "seed": seed });
        let resp = self.transport.send(&req).map_err(|e| CoreError::Provider(e.to_string()))?;
        let payload: ScorePayload = parse_json(Task::Score, &resp.content).map_err(|e| CoreError::Provider(e.to_string()))?;
        let sample = GuidanceSample {
            noise_level,
            weight: payload.weight,
            width: image.width,
            height: image.height,
            residual: decode_f32(&payload.residual).map_err(CoreError::Provider)?,
            mask_residual: payload
                .mask_residual
                .as_deref()
                .map(decode_f32)
                .transpose()
                .map_err(CoreError::Provider)?,
        };
        sample.validate(image.width, image.height)?;
        Ok(sample)
    }
}
