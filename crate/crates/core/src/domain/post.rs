use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("bad value `{value}` for `{field}`")]
    BadEnum { field: &'static str, value: String },
    #[error("post has no images")]
    EmptyImages,
    #[error("misinformation types set on a post labelled real")]
    TypeOnRealPost,
    #[error("bad date `{0}`")]
    BadDate(String),
    #[error("date {date} is after ingest date {today}")]
    FutureDate { date: NaiveDate, today: NaiveDate },
    #[error("image {index}: {reason}")]
    UnreadableImage { index: usize, reason: String },
    #[error("malformed record: {0}")]
    Malformed(String),
}

/// Ground-truth or predicted class of a post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Real, Label::Fake];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl FromStr for Label {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            _ => Err(ValidationError::BadEnum { field: "label", value: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Topic {
    Politics,
    Society,
    Entertainment,
    Science,
    History,
    Nature,
    Sports,
}

impl Topic {
    pub const ALL: [Topic; 7] = [
        Topic::Politics,
        Topic::Society,
        Topic::Entertainment,
        Topic::Science,
        Topic::History,
        Topic::Nature,
        Topic::Sports,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Politics => "politics",
            Topic::Society => "society",
            Topic::Entertainment => "entertainment",
            Topic::Science => "science",
            Topic::History => "history",
            Topic::Nature => "nature",
            Topic::Sports => "sports",
        }
    }
}

impl FromStr for Topic {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = s.trim().to_lowercase();
        Topic::ALL
            .into_iter()
            .find(|t| t.as_str() == folded)
            .ok_or_else(|| ValidationError::BadEnum { field: "topic", value: s.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MisinfoType {
    Deepfake,
    ImageOOC,
    TextMisleading,
}

impl MisinfoType {
    pub const ALL: [MisinfoType; 3] = [MisinfoType::Deepfake, MisinfoType::ImageOOC, MisinfoType::TextMisleading];

    pub fn as_str(self) -> &'static str {
        match self {
            MisinfoType::Deepfake => "deepfake",
            MisinfoType::ImageOOC => "image_ooc",
            MisinfoType::TextMisleading => "text_misleading",
        }
    }

    /// Column heading used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            MisinfoType::Deepfake => "Deepfakes",
            MisinfoType::ImageOOC => "Image OOC",
            MisinfoType::TextMisleading => "Text Misleading",
        }
    }
}

impl FromStr for MisinfoType {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String =
            s.trim().to_lowercase().chars().map(|c| if c == ' ' || c == '-' { '_' } else { c }).collect();
        match folded.as_str() {
            "deepfake" | "deepfakes" => Ok(MisinfoType::Deepfake),
            "image_ooc" | "imageooc" | "ooc" => Ok(MisinfoType::ImageOOC),
            "text_misleading" | "textmisleading" => Ok(MisinfoType::TextMisleading),
            _ => Err(ValidationError::BadEnum { field: "misinfo_types", value: s.to_string() }),
        }
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Label);
string_serde!(Topic);
string_serde!(MisinfoType);

/// Lowercase hex SHA-256 digest of an image's bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ContentHash(String);

impl ContentHash {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        ContentHash(hex::encode(Sha256::digest(bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ContentHash {
    type Error = ValidationError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let lower = s.trim().to_ascii_lowercase();
        if lower.len() == 64 && lower.bytes().all(|b| b.is_ascii_hexdigit()) {
            Ok(ContentHash(lower))
        } else {
            Err(ValidationError::BadEnum { field: "sha256", value: s })
        }
    }
}

impl From<ContentHash> for String {
    fn from(h: ContentHash) -> String {
        h.0
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An image keyed by content hash, with an optional place to fetch the bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub sha256: ContentHash,
    /// Relative path (resolved against the dataset file) or absolute URL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlaggingRef {
    pub url: String,
    pub text: String,
}

/// A validated social-media post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    pub images: Vec<ImageRef>,
    pub author_id: String,
    pub source_url: String,
    pub date: NaiveDate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topic: Option<Topic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(skip_serializing_if = "BTreeSet::is_empty")]
    pub misinfo_types: BTreeSet<MisinfoType>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flagging: Vec<FlaggingRef>,
}

impl Post {
    /// One dataset line, canonical field order.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("post serialization is infallible")
    }

    pub fn from_json_line(line: &str, ctx: &IngestContext) -> Result<Post, ValidationError> {
        let raw: RawPost = serde_json::from_str(line).map_err(|e| ValidationError::Malformed(e.to_string()))?;
        validate_post(raw, ctx)
    }

    /// Serialize and parse back. Identity on every valid post.
    pub fn roundtrip(&self) -> Post {
        Post::from_json_line(&self.to_json_line(), &IngestContext::default()).expect("a valid post always re-parses")
    }

    /// Key used to spot resubmissions: digest of the text and image hashes.
    pub fn content_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.text.trim().as_bytes());
        for img in &self.images {
            h.update([0u8]);
            h.update(img.sha256.as_str().as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Image entry as it appears on disk: a bare path/URL or an object.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RawImage {
    Location(String),
    Entry {
        #[serde(default)]
        sha256: Option<String>,
        #[serde(default, alias = "path", alias = "url")]
        location: Option<String>,
    },
}

/// A syntactically parsed but unvalidated dataset record.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawPost {
    pub id: Option<String>,
    pub text: Option<String>,
    #[serde(default)]
    pub images: Option<Vec<RawImage>>,
    pub author_id: Option<String>,
    pub source_url: Option<String>,
    pub date: Option<String>,
    pub topic: Option<String>,
    pub label: Option<String>,
    #[serde(default)]
    pub misinfo_types: Vec<String>,
    #[serde(default)]
    pub flagging: Vec<FlaggingRef>,
}

/// Environment for validation.
#[derive(Debug, Clone, Default)]
pub struct IngestContext {
    /// Reject posts dated after this day. `None` skips the check.
    pub today: Option<NaiveDate>,
    /// Directory that relative image paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl IngestContext {
    pub fn at(today: NaiveDate) -> Self {
        IngestContext { today: Some(today), base_dir: None }
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    fn resolve(&self, location: &str) -> Option<PathBuf> {
        if location.contains("://") {
            return None;
        }
        let p = Path::new(location);
        Some(match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        })
    }
}

fn parse_date(s: &str) -> Result<NaiveDate, ValidationError> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y/%m/%d") {
        return Ok(d);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.date_naive());
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(dt.date());
    }
    Err(ValidationError::BadDate(s.to_string()))
}

fn required(v: Option<String>, field: &'static str) -> Result<String, ValidationError> {
    v.filter(|s| !s.trim().is_empty()).ok_or(ValidationError::MissingField(field))
}

/// Turn a raw record into a [`Post`], enforcing every invariant.
///
/// Topics and misinformation types are case-folded before matching, dates
/// are normalized to a calendar day, and images without a hash are hashed
/// from the file at their (resolved) path.
pub fn validate_post(raw: RawPost, ctx: &IngestContext) -> Result<Post, ValidationError> {
    let id = required(raw.id, "id")?;
    let text = required(raw.text, "text")?;
    let author_id = raw.author_id.unwrap_or_default();
    let source_url = raw.source_url.unwrap_or_default();
    let date = parse_date(&required(raw.date, "date")?)?;
    if let Some(today) = ctx.today {
        if date > today {
            return Err(ValidationError::FutureDate { date, today });
        }
    }
    let topic = raw.topic.filter(|t| !t.trim().is_empty()).map(|t| t.parse::<Topic>()).transpose()?;
    let label = raw.label.filter(|t| !t.trim().is_empty()).map(|t| t.parse::<Label>()).transpose()?;
    let misinfo_types =
        raw.misinfo_types.iter().map(|t| t.parse::<MisinfoType>()).collect::<Result<BTreeSet<_>, _>>()?;
    if label == Some(Label::Real) && !misinfo_types.is_empty() {
        return Err(ValidationError::TypeOnRealPost);
    }

    let raw_images = raw.images.unwrap_or_default();
    if raw_images.is_empty() {
        return Err(ValidationError::EmptyImages);
    }
    let mut images = Vec::with_capacity(raw_images.len());
    for (index, img) in raw_images.into_iter().enumerate() {
        let (sha, location) = match img {
            RawImage::Location(loc) => (None, Some(loc)),
            RawImage::Entry { sha256, location } => (sha256, location),
        };
        let sha256 = match sha {
            Some(s) => ContentHash::try_from(s)?,
            None => {
                let loc = location.as_deref().ok_or(ValidationError::UnreadableImage {
                    index,
                    reason: "neither hash nor location given".into(),
                })?;
                let path = ctx.resolve(loc).ok_or_else(|| ValidationError::UnreadableImage {
                    index,
                    reason: "remote image without a hash".into(),
                })?;
                let bytes = std::fs::read(&path).map_err(|e| ValidationError::UnreadableImage {
                    index,
                    reason: format!("{}: {e}", path.display()),
                })?;
                ContentHash::of_bytes(&bytes)
            }
        };
        images.push(ImageRef { sha256, location });
    }

    Ok(Post { id, text, images, author_id, source_url, date, topic, label, misinfo_types, flagging: raw.flagging })
}
