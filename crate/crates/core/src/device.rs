//! Image descriptions pre-stored on the user's phone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::AlignedImage;
use crate::extract::{parse_device_lines, DeviceLine};
use crate::gateway::{Gateway, GatewayError, GenerationError};
use crate::prompts;

pub const DEVICE_IMAGE_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceImageDesc {
    /// 1-based; 1..=5 for generated images, 6 and up for images added
    /// during a conversation.
    pub index: u32,
    pub description: String,
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aligned_image: Option<AlignedImage>,
}

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("only {parsed} device image lines parsed, need {DEVICE_IMAGE_COUNT}")]
    TooFewParsed { parsed: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl From<GenerationError<DeviceError>> for DeviceError {
    fn from(err: GenerationError<DeviceError>) -> Self {
        match err {
            GenerationError::Gateway(e) => DeviceError::Gateway(e),
            GenerationError::Rejected(e) => e,
        }
    }
}

/// Keeps the first five parsed lines and numbers them 1..=5.
pub fn device_images_from_lines(lines: Vec<DeviceLine>) -> Result<Vec<DeviceImageDesc>, DeviceError> {
    if lines.len() < DEVICE_IMAGE_COUNT {
        return Err(DeviceError::TooFewParsed { parsed: lines.len() });
    }
    Ok(lines
        .into_iter()
        .take(DEVICE_IMAGE_COUNT)
        .zip(1u32..)
        .map(|(line, index)| DeviceImageDesc {
            index,
            description: line.description,
            categories: line.categories,
            aligned_image: None,
        })
        .collect())
}

pub fn generate_device_images(
    gateway: &Gateway,
    narrative: &str,
    name: &str,
) -> Result<Vec<DeviceImageDesc>, DeviceError> {
    let request = prompts::device_request(narrative, name);
    let (images, _) = gateway.complete_parsed(&request, |text| device_images_from_lines(parse_device_lines(text)))?;
    Ok(images)
}

/// Lower-cased, trimmed tag used for statistics buckets.
pub fn category_bucket(tag: &str) -> String {
    tag.trim().to_lowercase()
}
