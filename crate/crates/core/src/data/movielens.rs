//! MovieLens `u.data` parsing: `user<TAB>item<TAB>rating<TAB>timestamp`.

use std::collections::BTreeMap;
use std::path::Path;

use super::{read_file, DataError, RatingMatrix};

/// Ratings are divided by 5; unrated cells are 0. A repeated `(user, item)`
/// pair keeps the last rating and logs a warning.
pub fn parse_movielens(path: &Path) -> Result<RatingMatrix, DataError> {
    let text = read_file(path)?;
    let mut entries = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DataError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!(
                "expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let user: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad user id {:?}", fields[0])))?;
        let item: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad item id {:?}", fields[1])))?;
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad rating {:?}", fields[2])))?;
        if !(0.0..=5.0).contains(&rating) {
            return Err(bad(format!("rating {rating} outside [0, 5]")));
        }
        fields[3]
            .trim()
            .parse::<u64>()
            .map_err(|_| bad(format!("bad timestamp {:?}", fields[3])))?;
        if entries.insert((user, item), rating / 5.0).is_some() {
            log::warn!(
                "{}: line {line_no}: duplicate rating for user {user} item {item}; keeping the later one",
                path.display()
            );
        }
    }
    if entries.is_empty() {
        return Err(DataError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(RatingMatrix::from_entries(&entries))
}
