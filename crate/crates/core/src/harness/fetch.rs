//! Checksummed download cache for benchmark archives.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::data::DatasetManifest;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub offline: bool,
    pub attempts: usize,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions { offline: false, attempts: 3, backoff: Duration::from_millis(500), timeout: Duration::from_secs(300) }
    }
}

fn file_name(url: &str) -> String {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    match path.rsplit('/').next() {
        Some(s) if !s.is_empty() && !s.contains(':') => s.to_string(),
        _ => "download".to_string(),
    }
}

/// `cache_dir/<sha256>/<file name from url>`.
pub fn cache_path(cache_dir: &Path, url: &str, sha256: &str) -> PathBuf {
    cache_dir.join(sha256.to_ascii_lowercase()).join(file_name(url))
}

/// Hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Moves a file that failed verification into `cache_dir/quarantine`.
pub fn quarantine(cache_dir: &Path, path: &Path, found: &str) -> Result<PathBuf> {
    let dir = cache_dir.join("quarantine");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dest = dir.join(format!("{found}-{name}"));
    fs::rename(path, &dest).map_err(|e| Error::io(path, e))?;
    log::warn!("quarantined {} -> {}", path.display(), dest.display());
    Ok(dest)
}

fn download(url: &str, dest: &Path, opts: &FetchOptions) -> std::result::Result<(), String> {
    let client = reqwest::blocking::Client::builder().timeout(opts.timeout).build().map_err(|e| e.to_string())?;
    let mut resp = client.get(url).send().map_err(|e| e.to_string())?;
    if !resp.status().is_success() {
        return Err(format!("HTTP {}", resp.status()));
    }
    let mut f = fs::File::create(dest).map_err(|e| e.to_string())?;
    resp.copy_to(&mut f).map_err(|e| e.to_string())?;
    f.flush().map_err(|e| e.to_string())
}

/// Returns the cached path of `url`, downloading it when absent.
///
/// A cached file is trusted only if its checksum matches; a mismatching file
/// is quarantined. Network failures are retried `opts.attempts` times.
pub fn fetch_dataset(url: &str, sha256: &str, cache_dir: &Path, opts: &FetchOptions) -> Result<PathBuf> {
    let expected = sha256.to_ascii_lowercase();
    if expected.len() != 64 || !expected.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::invalid(format!("malformed sha256 {sha256:?}")));
    }
    let path = cache_path(cache_dir, url, &expected);
    if path.exists() {
        let found = sha256_file(&path)?;
        if found == expected {
            return Ok(path);
        }
        quarantine(cache_dir, &path, &found)?;
        if opts.offline {
            return Err(Error::Checksum { path, expected, found });
        }
    }
    if opts.offline {
        return Err(Error::Offline(format!("{url} is not cached and network access is disabled")));
    }
    let dir = path.parent().expect("cache path has a parent");
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let part = path.with_extension("part");

    let attempts = opts.attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        match download(url, &part, opts) {
            Ok(()) => {
                let found = sha256_file(&part)?;
                if found != expected {
                    let q = quarantine(cache_dir, &part, &found)?;
                    return Err(Error::Checksum { path: q, expected, found });
                }
                fs::rename(&part, &path).map_err(|e| Error::io(&path, e))?;
                return Ok(path);
            }
            Err(e) => {
                log::warn!("download of {url} failed (attempt {attempt}/{attempts}): {e}");
                last = e;
                let _ = fs::remove_file(&part);
                if attempt < attempts {
                    std::thread::sleep(opts.backoff * attempt as u32);
                }
            }
        }
    }
    Err(Error::Download { attempts, message: last })
}

/// Makes every file of a manifest available locally: local paths are
/// checked for existence and checksum (when given), remote entries are
/// fetched into the manifest's cache. Returns the resolved paths in
/// manifest order.
pub fn ingest(manifest: &DatasetManifest, opts: &FetchOptions) -> Result<Vec<PathBuf>> {
    let cache = manifest.cache_dir();
    let mut out = Vec::new();
    for d in &manifest.datasets {
        let files = std::iter::once(&d.train).chain(d.validation.as_ref()).chain(d.tests.iter().map(|t| &t.file));
        for f in files {
            let path = match (&f.path, &f.url, &f.sha256) {
                (None, Some(url), Some(sha)) => fetch_dataset(url, sha, &cache, opts)?,
                _ => {
                    let p = manifest.resolve(f)?;
                    if !p.is_file() {
                        return Err(Error::io(&p, std::io::Error::from(std::io::ErrorKind::NotFound)));
                    }
                    if let Some(sha) = &f.sha256 {
                        let found = sha256_file(&p)?;
                        if !found.eq_ignore_ascii_case(sha) {
                            return Err(Error::Checksum { path: p, expected: sha.clone(), found });
                        }
                    }
                    p
                }
            };
            out.push(path);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_layout() {
        let p = cache_path(Path::new("/c"), "https://host/a/b/data.zip?x=1", "ABCD");
        assert_eq!(p, Path::new("/c/abcd/data.zip"));
        assert_eq!(file_name("https://host/"), "download");
    }

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("abc");
        fs::write(&f, b"abc").unwrap();
        assert_eq!(sha256_file(&f).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn offline_miss_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let opts = FetchOptions { offline: true, ..Default::default() };
        let sha = "0".repeat(64);
        assert!(matches!(fetch_dataset("http://x/y.csv", &sha, dir.path(), &opts), Err(Error::Offline(_))));
    }
}
