use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use crate::domain::{ContentHash, ImageRef, Post};

use super::transport::{HttpRequest, Transport};
use super::BackendError;

#[derive(Debug, Clone)]
enum Source {
    File(PathBuf),
    Url(String),
}

/// Resolves image content hashes to bytes.
///
/// Locations are registered per post (relative paths resolved against the
/// dataset directory). Loaded bytes are checked against the hash.
#[derive(Default)]
pub struct ImageStore {
    sources: RwLock<HashMap<ContentHash, Source>>,
    transport: Option<Arc<dyn Transport>>,
}

impl ImageStore {
    pub fn new() -> Self {
        ImageStore::default()
    }

    /// Allow fetching URL-located images through `transport`.
    pub fn with_transport(transport: Arc<dyn Transport>) -> Self {
        ImageStore { sources: RwLock::default(), transport: Some(transport) }
    }

    pub fn register(&self, image: &ImageRef, base_dir: Option<&Path>) {
        let Some(loc) = &image.location else { return };
        let src = if loc.contains("://") {
            Source::Url(loc.clone())
        } else {
            let p = Path::new(loc);
            match base_dir {
                Some(b) if p.is_relative() => Source::File(b.join(p)),
                _ => Source::File(p.to_path_buf()),
            }
        };
        self.sources.write().unwrap_or_else(|p| p.into_inner()).insert(image.sha256.clone(), src);
    }

    pub fn register_post(&self, post: &Post, base_dir: Option<&Path>) {
        for img in &post.images {
            self.register(img, base_dir);
        }
    }

    pub fn bytes(&self, hash: &ContentHash) -> Result<Vec<u8>, BackendError> {
        let src = self.sources.read().unwrap_or_else(|p| p.into_inner()).get(hash).cloned();
        let unreadable = |why: String| BackendError::UnreadableImage { hash: hash.to_string(), reason: why };
        let bytes = match src {
            None => return Err(unreadable("no known location".into())),
            Some(Source::File(p)) => std::fs::read(&p).map_err(|e| unreadable(format!("{}: {e}", p.display())))?,
            Some(Source::Url(u)) => {
                let t = self.transport.as_ref().ok_or_else(|| unreadable("no transport for remote image".into()))?;
                t.send(HttpRequest::get(u))?.ok()?.body
            }
        };
        if ContentHash::of_bytes(&bytes) != *hash {
            return Err(unreadable("content does not match hash".into()));
        }
        Ok(bytes)
    }
}
