pub mod eval;
pub mod foundry;
pub mod mix;
pub mod prefs;
pub mod seeds;

use rayon::prelude::*;

/// Applies `f` to every item on the current pool, keeping input order.
pub fn par_map<T, R, E, F>(items: &[T], f: F) -> Vec<Result<R, E>>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Successful values in order, plus the first error if any.
pub fn split_results<R, E>(results: Vec<Result<R, E>>) -> (Vec<R>, Option<E>) {
    let mut ok = Vec::with_capacity(results.len());
    let mut first = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                first.get_or_insert(e);
            }
        }
    }
    (ok, first)
}

pub fn parse_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}
