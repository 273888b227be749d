//! Client for image services speaking the layerlab image schema.
//!
//! Request: multipart/form-data with a PNG in field `image`.
//! Response: `{"raw_text"?: str, "table"?: {col: [str]}, "boxes"?: [[x, y, w, h, label, score]]}`
//! with boxes relative to the image.

use std::sync::OnceLock;
use std::time::Duration;

use image::RgbaImage;
use serde_json::Value;

use crate::doc::Rect;
use crate::predict::{ImageBox, ImageOutput, ImagePredictor, PredictorError};
use crate::render::encode_png;

use super::table::TableRecord;

pub struct RemoteImagePredictor {
    url: String,
    timeout: Duration,
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
}

fn invalid(msg: impl Into<String>) -> PredictorError {
    PredictorError::InvalidResponse(msg.into())
}

fn cell_string(v: &Value) -> Result<String, PredictorError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Null => Ok(String::new()),
        _ => Err(invalid("table cells must be scalars")),
    }
}

/// Validate a service response into an [`ImageOutput`].
pub fn parse_image_response(value: &Value) -> Result<ImageOutput, PredictorError> {
    let obj = value.as_object().ok_or_else(|| invalid("response must be a JSON object"))?;
    let raw_text = match obj.get("raw_text") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(invalid("raw_text must be a string")),
    };
    let table = match obj.get("table") {
        None | Some(Value::Null) => None,
        Some(Value::Object(cols)) => {
            let mut record = TableRecord::new();
            for (name, values) in cols {
                let values = values
                    .as_array()
                    .ok_or_else(|| invalid(format!("table column {name:?} must be a list")))?;
                record.insert(name.clone(), values.iter().map(cell_string).collect::<Result<_, _>>()?);
            }
            Some(record)
        }
        Some(_) => return Err(invalid("table must be an object of columns")),
    };
    let boxes = match obj.get("boxes") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .map(|item| {
                    let parts = item
                        .as_array()
                        .filter(|p| p.len() == 6)
                        .ok_or_else(|| invalid("each box must be [x, y, w, h, label, score]"))?;
                    let num = |i: usize| {
                        parts[i].as_f64().ok_or_else(|| invalid("box coordinates must be numbers"))
                    };
                    let label = parts[4]
                        .as_str()
                        .ok_or_else(|| invalid("box label must be a string"))?;
                    Ok(ImageBox {
                        rect: Rect::new(num(0)?, num(1)?, num(2)?, num(3)?),
                        label: label.to_string(),
                        score: num(5)?,
                    })
                })
                .collect::<Result<Vec<_>, PredictorError>>()?,
        ),
        Some(_) => return Err(invalid("boxes must be a list")),
    };
    let out = ImageOutput {
        raw_text,
        table,
        boxes,
    };
    out.validate().map_err(invalid)?;
    Ok(out)
}

impl RemoteImagePredictor {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            timeout,
            client: OnceLock::new(),
        }
    }

    /// POST a PNG and return the parsed JSON body.
    pub fn call(&self, png: Vec<u8>) -> Result<Value, PredictorError> {
        let client = self
            .client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(self.timeout)
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| PredictorError::Transport(e.clone()))?;
        let part = reqwest::blocking::multipart::Part::bytes(png)
            .file_name("crop.png")
            .mime_str("image/png")
            .expect("static mime type");
        let form = reqwest::blocking::multipart::Form::new().part("image", part);
        let resp = client.post(&self.url).multipart(form).send().map_err(|e| {
            if e.is_timeout() {
                PredictorError::Timeout
            } else {
                PredictorError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| PredictorError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(PredictorError::Http {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| invalid(format!("response is not JSON: {e}")))
    }
}

impl ImagePredictor for RemoteImagePredictor {
    fn process_image(&self, image: &RgbaImage) -> Result<ImageOutput, PredictorError> {
        parse_image_response(&self.call(encode_png(image))?)
    }
}
