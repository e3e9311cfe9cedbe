//! Provider-neutral chat request and its content digest.

use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseHint {
    FreeText,
    ObjectNotation,
}

impl ResponseHint {
    fn tag(self) -> &'static str {
        match self {
            ResponseHint::FreeText => "free_text",
            ResponseHint::ObjectNotation => "object_notation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequestError {
    #[error("system text is empty")]
    EmptySystemText,
    #[error("user text is empty")]
    EmptyUserText,
    #[error("model name is empty")]
    EmptyModel,
    #[error("temperature {0} outside [0, 2]")]
    Temperature(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRequest")]
pub struct ChatRequest {
    system_text: String,
    user_text: String,
    temperature: f64,
    model_name: String,
    response_hint: ResponseHint,
}

#[derive(Deserialize)]
struct RawRequest {
    system_text: String,
    user_text: String,
    temperature: f64,
    model_name: String,
    response_hint: ResponseHint,
}

impl TryFrom<RawRequest> for ChatRequest {
    type Error = RequestError;
    fn try_from(r: RawRequest) -> Result<Self, Self::Error> {
        ChatRequest::new(r.system_text, r.user_text, r.temperature, r.model_name, r.response_hint)
    }
}

impl ChatRequest {
    pub fn new(
        system_text: impl Into<String>,
        user_text: impl Into<String>,
        temperature: f64,
        model_name: impl Into<String>,
        response_hint: ResponseHint,
    ) -> Result<Self, RequestError> {
        let system_text = system_text.into();
        let user_text = user_text.into();
        let model_name = model_name.into();
        if system_text.trim().is_empty() {
            return Err(RequestError::EmptySystemText);
        }
        if user_text.trim().is_empty() {
            return Err(RequestError::EmptyUserText);
        }
        if model_name.trim().is_empty() {
            return Err(RequestError::EmptyModel);
        }
        if !(0.0..=2.0).contains(&temperature) {
            return Err(RequestError::Temperature(temperature));
        }
        Ok(ChatRequest { system_text, user_text, temperature, model_name, response_hint })
    }

    pub fn system_text(&self) -> &str {
        &self.system_text
    }
    pub fn user_text(&self) -> &str {
        &self.user_text
    }
    pub fn temperature(&self) -> f64 {
        self.temperature
    }
    pub fn model_name(&self) -> &str {
        &self.model_name
    }
    pub fn response_hint(&self) -> ResponseHint {
        self.response_hint
    }

    /// Canonical encoding: a JSON object with keys in lexicographic order and
    /// no insignificant whitespace. Field order in the source document never
    /// matters because the encoding is rebuilt from the typed value.
    pub fn canonical_json(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert("model_name".into(), self.model_name.clone().into());
        map.insert("response_hint".into(), self.response_hint.tag().into());
        map.insert("system_text".into(), self.system_text.clone().into());
        map.insert("temperature".into(), self.temperature.into());
        map.insert("user_text".into(), self.user_text.clone().into());
        serde_json::Value::Object(map).to_string()
    }

    /// Lowercase hex SHA-256 of [`ChatRequest::canonical_json`].
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical_json().as_bytes());
        let mut out = String::with_capacity(64);
        for b in hash.iter() {
            out.push(char::from_digit((b >> 4) as u32, 16).unwrap());
            out.push(char::from_digit((b & 0xf) as u32, 16).unwrap());
        }
        out
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self, RequestError> {
        ChatRequest::new(
            self.system_text.to_string(),
            self.user_text.to_string(),
            temperature,
            self.model_name.to_string(),
            self.response_hint,
        )
    }
}
