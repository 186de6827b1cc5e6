//! Prompt templates for grid and sequence questions.

use std::fmt;
use std::str::FromStr;

use oddgrid_core::gridsynth::{SequenceRecord, StimulusRecord};
use oddgrid_core::perturb::AttributeSet;
use serde::{Deserialize, Serialize};

use crate::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptMode {
    /// Full evaluation prompt with the attribute hint and the no-odd sentinel.
    Grid,
    /// Short training prompt carrying only the format rule.
    GridMinimal,
    /// Multi-image anomaly listing.
    Sequence,
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptMode::Grid => "grid",
            PromptMode::GridMinimal => "grid-minimal",
            PromptMode::Sequence => "sequence",
        })
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "grid" => Ok(PromptMode::Grid),
            "grid-minimal" | "minimal" => Ok(PromptMode::GridMinimal),
            "sequence" => Ok(PromptMode::Sequence),
            _ => Err(format!(
                "unknown prompt mode `{s}` (expected grid, grid-minimal or sequence)"
            )),
        }
    }
}

/// What a prompt is built for.
#[derive(Debug, Clone, Copy)]
pub enum Subject<'a> {
    Grid(&'a StimulusRecord),
    Sequence(&'a SequenceRecord),
}

/// Human-readable noun for an icon id: digits and separators dropped,
/// falling back to "icon".
pub fn shape_noun(icon_id: &str) -> String {
    let cleaned: String = icon_id
        .chars()
        .map(|c| {
            if c.is_ascii_digit() || c == '-' || c == '_' || c == '.' {
                ' '
            } else {
                c
            }
        })
        .collect();
    let noun = cleaned.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    if noun.is_empty() || !noun.chars().any(char::is_alphabetic) {
        "icon".to_string()
    } else {
        noun
    }
}

/// "color", "color and size", "color, size, and rotation".
pub fn odd_description(attributes: AttributeSet) -> String {
    let names: Vec<String> = attributes.iter().map(|a| a.name().to_lowercase()).collect();
    match names.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

fn grid_prompt(rows: usize, cols: usize, shape: &str, odd_desc: &str) -> String {
    format!(
        "You are solving an odd-one-out visual perception task.\n\
You are given an image showing a {rows}×{cols} grid of {shape}s.\n\
All {shape}s appear the same, except one that is visually different in {odd_desc}.\n\
\n\
This is a visual perception task that does not require lengthy logical reasoning.\n\
\n\
Instructions\n\
- Carefully inspect the grid.\n\
- Identify the grid position (row and column) of the {shape} that is different.\n\
- Counting starts from the top-left corner, i.e., Row 1, Column 1.\n\
- Provide brief visual observations if needed (no more than 300 words).\n\
\n\
Output Format Requirements\n\
- Provide concise natural-language observations.\n\
- End the response with the final answer in the following strict LaTeX format:\n\
\\boxed{{Row X, Column Y}}\n\
where X and Y are integers (e.g., Row 2, Column 3).\n\
- Do not include any text after the final \\boxed{{}}.\n\
- If no odd {shape} exists, output:\n\
\\boxed{{Row 0, Column 0}}\n"
    )
}

fn minimal_prompt(rows: usize, cols: usize, odd_desc: &str) -> String {
    format!(
        "Identify the object that differs from the others in the {rows}×{cols} grid.\n\
The difference lies in {odd_desc}.\n\
Count positions from the top-left corner as Row 1, Column 1.\n\
Return the final answer strictly in the following format:\n\
\\boxed{{Row X, Column Y}}\n"
    )
}

fn sequence_prompt(n: usize) -> String {
    format!(
        "You are presented with {n} images, labeled image1, image2, ..., image{n}. \
Identify all anomalous images in the set.\n\
\n\
Output Rules:\n\
1. You may perform observation and comparative reasoning before answering.\n\
2. The final answer must be enclosed in exactly one \\boxed{{}} block.\n\
3. Inside the box, list the labels of all anomalous images (e.g., image1,image3).\n\
4. If no anomalous images are found, output \\boxed{{}}.\n"
    )
}

/// Instantiates the template of `mode` for `subject`.
pub fn build_prompt(subject: Subject<'_>, mode: PromptMode) -> Result<String, GatewayError> {
    match (subject, mode) {
        (Subject::Grid(r), PromptMode::Grid) => Ok(grid_prompt(
            r.rows,
            r.cols,
            &shape_noun(&r.icon_id),
            &odd_description(r.types),
        )),
        (Subject::Grid(r), PromptMode::GridMinimal) => Ok(minimal_prompt(r.rows, r.cols, &odd_description(r.types))),
        (Subject::Sequence(s), PromptMode::Sequence) => Ok(sequence_prompt(s.n)),
        (_, mode) => Err(GatewayError::ModeMismatch(mode)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use oddgrid_core::perturb::Attribute;

    #[test]
    fn nouns() {
        assert_eq!(shape_noun("apple_03"), "apple");
        assert_eq!(shape_noun("traffic-light-12"), "traffic light");
        assert_eq!(shape_noun("00042"), "icon");
        assert_eq!(shape_noun("Glyph00007"), "glyph");
    }

    #[test]
    fn descriptions() {
        let set = |v: &[Attribute]| v.iter().copied().collect::<AttributeSet>();
        assert_eq!(odd_description(set(&[Attribute::Color])), "color");
        assert_eq!(
            odd_description(set(&[Attribute::Size, Attribute::Color])),
            "color and size"
        );
        assert_eq!(
            odd_description(set(&Attribute::ALL)),
            "color, size, rotation, and position"
        );
    }

    #[test]
    fn mode_names() {
        for m in [PromptMode::Grid, PromptMode::GridMinimal, PromptMode::Sequence] {
            assert_eq!(m.to_string().parse::<PromptMode>().unwrap(), m);
        }
    }
}
