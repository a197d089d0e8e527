use std::collections::HashMap;

use super::EvalResult;

/// Accuracy cells keyed by model and benchmark, both kept in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsGrid {
    models: Vec<String>,
    benchmarks: Vec<String>,
    cells: HashMap<(String, String), f64>,
}

impl ResultsGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a EvalResult>) -> Self {
        let mut grid = Self::new();
        for r in results {
            grid.insert(&r.model, &r.benchmark, r.accuracy);
        }
        grid
    }

    /// Later inserts for the same cell replace earlier ones.
    pub fn insert(&mut self, model: &str, benchmark: &str, accuracy: f64) {
        if !self.models.iter().any(|m| m == model) {
            self.models.push(model.to_string());
        }
        if !self.benchmarks.iter().any(|b| b == benchmark) {
            self.benchmarks.push(benchmark.to_string());
        }
        self.cells.insert((model.to_string(), benchmark.to_string()), accuracy);
    }

    pub fn get(&self, model: &str, benchmark: &str) -> Option<f64> {
        self.cells.get(&(model.to_string(), benchmark.to_string())).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Value in ten-thousandths, the precision shown in the table.
fn quantize(v: f64) -> i64 {
    (v * 10_000.0).round() as i64
}

/// Markdown table: best per column in bold, second-best underlined. A tie
/// for best bolds every leader and underlines nothing.
pub fn render_report(grid: &ResultsGrid) -> String {
    let mut out = format!("| Model | {} |\n", grid.benchmarks.join(" | "));
    out.push_str(&format!("|---|{}\n", "---|".repeat(grid.benchmarks.len())));

    let mut marks: HashMap<(usize, usize), &str> = HashMap::new();
    for (col, bench) in grid.benchmarks.iter().enumerate() {
        let column: Vec<(usize, i64)> = grid
            .models
            .iter()
            .enumerate()
            .filter_map(|(row, m)| grid.get(m, bench).map(|v| (row, quantize(v))))
            .collect();
        let Some(best) = column.iter().map(|(_, q)| *q).max() else {
            continue;
        };
        let leaders = column.iter().filter(|(_, q)| *q == best).count();
        let second = column.iter().map(|(_, q)| *q).filter(|q| *q < best).max();
        for (row, q) in &column {
            if *q == best {
                marks.insert((*row, col), "best");
            } else if leaders == 1 && Some(*q) == second {
                marks.insert((*row, col), "second");
            }
        }
    }

    for (row, model) in grid.models.iter().enumerate() {
        let cells: Vec<String> = grid
            .benchmarks
            .iter()
            .enumerate()
            .map(|(col, bench)| match grid.get(model, bench) {
                None => "-".to_string(),
                Some(v) => {
                    let text = format!("{v:.4}");
                    match marks.get(&(row, col)) {
                        Some(&"best") => format!("**{text}**"),
                        Some(&"second") => format!("<u>{text}</u>"),
                        _ => text,
                    }
                }
            })
            .collect();
        out.push_str(&format!("| {model} | {} |\n", cells.join(" | ")));
    }
    out
}
