//! Question templates: one phrasing set per question type, instantiated
//! with "{color} {shape}" block names and direction words. Question text is
//! all lowercase so tokenizer round trips are trivial.

use super::QuestionType;
use crate::blockworld::{Block, Direction, QuestionKey};

pub const BLOCK_TOUCHING: &[&str] = &[
    "is the {a} touching the {b}?",
    "are the {a} and {b} blocks in contact with each other?",
    "is there contact between the {a} block and the {b} block?",
    "does the {a} touch the {b}?",
    "is the {a} block in physical contact with the {b} block?",
    "are the {a} and {b} blocks touching each other?",
    "is the {a} and {b} directly touching?",
    "do the {a} and {b} blocks meet?",
];

pub const PEG_TOUCHING: &[&str] = &[
    "is the robotic peg touching the {b}?",
    "is the peg in contact with the {b}?",
    "is the {b} next to the peg?",
    "does the peg touch the {b} block?",
    "is the peg touching the {b} block?",
];

pub const IN_CENTER: &[&str] = &[
    "is the {b} in the center of the board?",
    "is the {b} block near the middle of the board?",
    "is the {b} located in the central region of the board?",
    "is the {b} in the middle area of the board?",
];

pub const RELATIVE_DIR: &[&str] = &[
    "is the {a} {dir} the {b}?",
    "is the {a} block {dir} the {b} block?",
    "is the {a} positioned {dir} the {b}?",
    "does the {a} sit {dir} the {b}?",
];

pub const MOVED: &[&str] = &[
    "did the {b} move?",
    "did the {b} block move?",
    "has the {b} changed position?",
    "did the {b} block change its position?",
];

pub const MOVED_DIR: &[&str] = &[
    "did the {b} move {dir}?",
    "did the {b} block move {dir}?",
    "has the {b} moved {dir}?",
    "did the {b} shift {dir}?",
];

pub const CLOSER: &[&str] = &[
    "are the {a} and {b} closer together?",
    "did the {a} and {b} get closer to each other?",
    "are the {a} and the {b} closer together than before?",
    "did the distance between the {a} and {b} decrease?",
];

pub const PEG_CLOSER: &[&str] = &[
    "is the robotic peg closer to the {b}?",
    "is the peg closer to the {b} than before?",
    "did the peg get closer to the {b}?",
    "has the peg moved closer to the {b}?",
];

pub fn phrasings(qtype: QuestionType) -> &'static [&'static str] {
    match qtype {
        QuestionType::BlockTouching => BLOCK_TOUCHING,
        QuestionType::PegTouching => PEG_TOUCHING,
        QuestionType::InCenter => IN_CENTER,
        QuestionType::RelativeDir => RELATIVE_DIR,
        QuestionType::Moved => MOVED,
        QuestionType::MovedDir => MOVED_DIR,
        QuestionType::Closer => CLOSER,
        QuestionType::PegCloser => PEG_CLOSER,
    }
}

fn fill(template: &str, a: Option<&str>, b: &str, dir: Option<&str>) -> String {
    let mut out = template.replace("{b}", b);
    if let Some(a) = a {
        out = out.replace("{a}", a);
    }
    if let Some(d) = dir {
        out = out.replace("{dir}", d);
    }
    out
}

/// Render one question instance. `phrasing` indexes into the type's
/// phrasing table (wrapped, so any u32 is valid).
pub fn instantiate(key: QuestionKey, phrasing: usize, blocks: &[Block]) -> String {
    let name = |i: usize| blocks[i].display_name();
    let qtype = QuestionType::of(key);
    let table = phrasings(qtype);
    let t = table[phrasing % table.len()];
    match key {
        QuestionKey::Touching { a, b } => fill(t, Some(&name(a)), &name(b), None),
        QuestionKey::PegTouching { b } => fill(t, None, &name(b), None),
        QuestionKey::InCenter { b } => fill(t, None, &name(b), None),
        QuestionKey::RelativeDir { a, b, dir } => {
            fill(t, Some(&name(a)), &name(b), Some(dir.relative_phrase()))
        }
        QuestionKey::Moved { b } => fill(t, None, &name(b), None),
        QuestionKey::MovedDir { b, dir } => fill(t, None, &name(b), Some(dir.word())),
        QuestionKey::Closer { a, b } => fill(t, Some(&name(a)), &name(b), None),
        QuestionKey::PegCloser { b } => fill(t, None, &name(b), None),
    }
}

/// Every word that can appear in any instantiated question; the vocabulary
/// is built from this closure plus answers and specials.
pub fn vocabulary_words() -> Vec<String> {
    use crate::blockworld::{BlockShape, Color};
    let mut text = String::new();
    for table in [
        BLOCK_TOUCHING, PEG_TOUCHING, IN_CENTER, RELATIVE_DIR, MOVED, MOVED_DIR, CLOSER,
        PEG_CLOSER,
    ] {
        for t in table {
            text.push_str(t);
            text.push(' ');
        }
    }
    for c in Color::ALL {
        text.push_str(c.name());
        text.push(' ');
    }
    for s in BlockShape::ALL {
        text.push_str(s.name());
        text.push(' ');
    }
    for d in Direction::ALL {
        text.push_str(d.word());
        text.push(' ');
        text.push_str(d.relative_phrase());
        text.push(' ');
    }
    let mut words: Vec<String> = text
        .replace('?', " ? ")
        .split_whitespace()
        .filter(|w| !w.starts_with('{'))
        .map(|w| w.to_string())
        .collect();
    words.sort();
    words.dedup();
    words
}
