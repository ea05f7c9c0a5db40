//! LastFM `user_artists.dat` parsing with a `userID\tartistID\tweight` header.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{read_file, DataError, RatingMatrix};

pub const MIN_USER_INTERACTIONS: usize = 30;

/// Binary listened/not-listened matrix. Users with fewer than
/// `min_interactions` positive entries are dropped, then artists with no
/// remaining listener are dropped.
pub fn parse_lastfm(path: &Path, min_interactions: usize) -> Result<RatingMatrix, DataError> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    let cols: Vec<&str> = header.split('\t').collect();
    if cols != ["userID", "artistID", "weight"] {
        return Err(DataError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header \"userID\\tartistID\\tweight\", found {header:?}"),
        });
    }
    let mut pairs: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DataError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(format!(
                "expected 3 tab-separated fields, found {}",
                f.len()
            )));
        }
        let user: u64 = f[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad user id {:?}", f[0])))?;
        let artist: u64 = f[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad artist id {:?}", f[1])))?;
        let weight: f64 = f[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad weight {:?}", f[2])))?;
        if !(weight >= 0.0) {
            return Err(bad(format!("negative weight {weight}")));
        }
        if weight > 0.0 {
            pairs.insert((user, artist), 1.0);
        }
    }
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for &(u, _) in pairs.keys() {
        *counts.entry(u).or_default() += 1;
    }
    pairs.retain(|(u, _), _| counts[u] >= min_interactions);
    if pairs.is_empty() {
        return Err(DataError::Empty {
            path: path.to_path_buf(),
        });
    }
    let m = RatingMatrix::from_entries(&pairs);
    log::info!(
        "{}: kept {} users × {} artists (users need ≥ {min_interactions} interactions)",
        path.display(),
        m.rows,
        m.cols
    );
    Ok(m)
}
