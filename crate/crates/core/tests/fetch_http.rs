//! Download cache against a loopback HTTP server.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use nlsi_core::data::{DatasetManifest, FileEntry};
use nlsi_core::harness::fetch::{cache_path, fetch_dataset, ingest, sha256_file, FetchOptions};
use nlsi_core::Error;

const BODY: &str = "u,y\n0.0,0.0\n1.0,0.5\n0.5,0.75\n";

struct Server {
    base: String,
    hits: Arc<AtomicUsize>,
}

fn serve() -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request = String::new();
            reader.read_line(&mut request).unwrap_or(0);
            let mut line = String::new();
            while reader.read_line(&mut line).map(|n| n > 2).unwrap_or(false) {
                line.clear();
            }
            let path = request.split_whitespace().nth(1).unwrap_or("/").to_string();
            let (status, body) = if path.starts_with("/data") { ("200 OK", BODY) } else { ("500 Internal Server Error", "") };
            let _ = write!(stream, "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len());
        }
    });
    Server { base, hits }
}

fn body_sha() -> String {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b");
    std::fs::write(&p, BODY).unwrap();
    sha256_file(&p).unwrap()
}

fn quick() -> FetchOptions {
    FetchOptions { attempts: 2, backoff: Duration::from_millis(10), timeout: Duration::from_secs(10), ..FetchOptions::default() }
}

#[test]
fn download_then_cache_hit() {
    let srv = serve();
    let cache = tempfile::tempdir().unwrap();
    let url = format!("{}/data/train.csv", srv.base);
    let sha = body_sha();
    let p = fetch_dataset(&url, &sha, cache.path(), &quick()).unwrap();
    assert_eq!(p, cache_path(cache.path(), &url, &sha));
    assert_eq!(std::fs::read_to_string(&p).unwrap(), BODY);
    assert_eq!(srv.hits.load(Ordering::SeqCst), 1);

    let again = fetch_dataset(&url, &sha, cache.path(), &FetchOptions { offline: true, ..quick() }).unwrap();
    assert_eq!(again, p);
    assert_eq!(srv.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn checksum_mismatch_is_quarantined() {
    let srv = serve();
    let cache = tempfile::tempdir().unwrap();
    let url = format!("{}/data/x.csv", srv.base);
    let wrong = "0".repeat(64);
    let err = fetch_dataset(&url, &wrong, cache.path(), &quick()).unwrap_err();
    assert!(matches!(err, Error::Checksum { .. }), "{err}");
    assert!(!cache_path(cache.path(), &url, &wrong).exists());
    let q: Vec<_> = std::fs::read_dir(cache.path().join("quarantine")).unwrap().collect();
    assert_eq!(q.len(), 1);
}

#[test]
fn corrupted_cache_is_replaced() {
    let srv = serve();
    let cache = tempfile::tempdir().unwrap();
    let url = format!("{}/data/y.csv", srv.base);
    let sha = body_sha();
    let slot = cache_path(cache.path(), &url, &sha);
    std::fs::create_dir_all(slot.parent().unwrap()).unwrap();
    std::fs::write(&slot, "tampered").unwrap();
    let p = fetch_dataset(&url, &sha, cache.path(), &quick()).unwrap();
    assert_eq!(std::fs::read_to_string(p).unwrap(), BODY);
    assert!(cache.path().join("quarantine").read_dir().unwrap().next().is_some());
}

#[test]
fn server_errors_exhaust_retries() {
    let srv = serve();
    let cache = tempfile::tempdir().unwrap();
    let url = format!("{}/broken.csv", srv.base);
    let err = fetch_dataset(&url, &body_sha(), cache.path(), &quick()).unwrap_err();
    assert!(matches!(err, Error::Download { attempts: 2, .. }), "{err}");
    assert_eq!(srv.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn ingest_fetches_remote_entries() {
    let srv = serve();
    let root = tempfile::tempdir().unwrap();
    let sha = body_sha();
    let remote = |name: &str| FileEntry { path: None, url: Some(format!("{}/data/{name}", srv.base)), sha256: Some(sha.clone()) };
    let text = format!(
        r#"
manifest_version = 1
cache_dir = "cache"

[[dataset]]
benchmark_id = "ced"
sample_time = 0.02
report_unit = "ticks/s"
report_scale = 1.0
train = {{ url = "{}", sha256 = "{sha}" }}
tests = [
  {{ name = "test1", url = "{}", sha256 = "{sha}" }},
  {{ name = "test2", url = "{}", sha256 = "{sha}" }},
]
"#,
        remote("train.csv").url.unwrap(),
        remote("t1.csv").url.unwrap(),
        remote("t2.csv").url.unwrap(),
    );
    let mpath = root.path().join("manifest.toml");
    std::fs::write(&mpath, text).unwrap();
    let m = DatasetManifest::load(&mpath).unwrap();
    let paths = ingest(&m, &quick()).unwrap();
    assert_eq!(paths.len(), 3);
    assert!(paths.iter().all(|p| p.starts_with(root.path().join("cache"))));
    assert_eq!(srv.hits.load(Ordering::SeqCst), 3);
    let offline = ingest(&m, &FetchOptions { offline: true, ..quick() }).unwrap();
    assert_eq!(offline, paths);
    assert_eq!(srv.hits.load(Ordering::SeqCst), 3);
}
