//! Fixes for syntax mistakes that language models make often.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;

use super::SCRIPT_MARKER;
use super::parse::MARKER;

/// Applies every repair rule in a fixed order. The result is a fixed point:
/// repairing it again changes nothing.
pub fn repair_text(text: &str) -> String {
    let text = strip_fences(text);
    let text = normalize_typography(&text);
    let text = map_invented_blocks(&text);
    let text = rewrite_braces(&text);
    let text = drop_prose(&text);
    dedupe_versions(&text)
}

/// Keeps only the content of fenced code blocks, if there are any.
fn strip_fences(text: &str) -> String {
    let is_fence = |l: &str| l.trim_start().starts_with("```");
    if !text.lines().any(is_fence) {
        return text.to_string();
    }
    let mut out = Vec::new();
    let mut inside = false;
    for line in text.lines() {
        if is_fence(line) {
            inside = !inside;
            if !inside {
                out.push("");
            }
            continue;
        }
        if inside {
            out.push(line);
        }
    }
    join_lines(&out)
}

fn normalize_typography(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{201c}' | '\u{201d}' | '\u{201e}' => '"',
            '\u{2018}' | '\u{2019}' => '\'',
            '\u{2013}' | '\u{2014}' | '\u{2212}' => '-',
            '\u{00a0}' | '\u{2009}' | '\u{202f}' => ' ',
            _ => c,
        })
        .collect::<String>()
        .replace('\u{2026}', "...")
}

static INVENTED: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    [
        (r"(?i)^(\s*)set rotation to\b", "${1}point in direction"),
        (r"(?i)^(\s*)change rotation by\b", "${1}turn right"),
        (r"(?i)^(\s*)turn (?:cw|clockwise)\b", "${1}turn right"),
        (r"(?i)^(\s*)turn (?:ccw|counter-?clockwise|anticlockwise)\b", "${1}turn left"),
        (r"(?i)^(\s*)when (?:the )?(?:green )?flag (?:is )?clicked\s*$", "${1}when green flag clicked"),
        (r"(?i)^(\s*)when (?:the )?green flag is clicked\s*$", "${1}when green flag clicked"),
        (r"(?i)^(\s*)repeat forever\s*$", "${1}forever"),
        (r"(?i)^(\s*)end (?:if|repeat|forever)\s*$", "${1}end"),
    ]
    .into_iter()
    .map(|(re, to)| (Regex::new(re).unwrap(), to))
    .collect()
});

/// Rewrites blocks that do not exist in Scratch to their real counterparts.
fn map_invented_blocks(text: &str) -> String {
    let lines: Vec<String> = text
        .lines()
        .map(|line| {
            let mut line = line.to_string();
            for (re, to) in INVENTED.iter() {
                line = re.replace(&line, *to).into_owned();
            }
            line
        })
        .collect();
    join_lines(&lines)
}

/// Drops lines of prose around the code: no brackets of any kind and
/// ending in sentence punctuation.
fn drop_prose(text: &str) -> String {
    let lines: Vec<&str> = text
        .lines()
        .filter(|line| {
            let t = line.trim();
            let bracketed = t.contains(['(', '[', '<', '{', '}']);
            let sentence = t.ends_with(['.', ':', '!']) && t.split_whitespace().count() >= 3;
            t.starts_with("//") || t.starts_with("define") || bracketed || !sentence
        })
        .collect();
    join_lines(&lines)
}

enum Piece {
    Text(String),
    Open,
    Close,
}

/// Splits a line at braces that are outside square brackets.
fn pieces(line: &str) -> Vec<Piece> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut square = false;
    let mut escaped = false;
    for c in line.chars() {
        if escaped {
            current.push(c);
            escaped = false;
            continue;
        }
        match c {
            '\\' => {
                escaped = true;
                current.push(c);
            }
            '[' => {
                square = true;
                current.push(c);
            }
            ']' => {
                square = false;
                current.push(c);
            }
            '{' | '}' if !square => {
                if !current.trim().is_empty() {
                    out.push(Piece::Text(current.trim().to_string()));
                }
                current.clear();
                out.push(if c == '{' { Piece::Open } else { Piece::Close });
            }
            _ => current.push(c),
        }
    }
    if !current.trim().is_empty() {
        out.push(Piece::Text(current.trim().to_string()));
    }
    out
}

/// Turns `{ ... }` bodies into `then`/`else`/`end` form.
fn rewrite_braces(text: &str) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut brace_end = false;
    for line in text.lines() {
        let parts = pieces(line);
        if !parts.iter().any(|p| matches!(p, Piece::Open | Piece::Close)) {
            if brace_end && line.trim().eq_ignore_ascii_case("else") {
                out.pop();
            }
            brace_end = false;
            out.push(line.to_string());
            continue;
        }
        let mut i = 0;
        while i < parts.len() {
            match &parts[i] {
                Piece::Text(t) => {
                    let opens = matches!(parts.get(i + 1), Some(Piece::Open));
                    if t.eq_ignore_ascii_case("else") {
                        if brace_end {
                            out.pop();
                        }
                        out.push("else".to_string());
                        brace_end = false;
                    } else if opens {
                        out.push(header(t));
                        brace_end = false;
                    } else {
                        out.push(t.clone());
                        brace_end = false;
                    }
                    i += if opens { 2 } else { 1 };
                }
                Piece::Open => i += 1,
                Piece::Close => {
                    out.push("end".to_string());
                    brace_end = true;
                    i += 1;
                }
            }
        }
    }
    join_lines(&out)
}

fn header(text: &str) -> String {
    let lower = text.to_ascii_lowercase();
    if lower.starts_with("if ") && !lower.ends_with(" then") {
        format!("{text} then")
    } else {
        text.to_string()
    }
}

/// Removes version suffixes from ID-comments. Where a script appears both
/// as an original and as a modified version, the original is dropped.
fn dedupe_versions(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let suffix_of = |line: &str| -> Option<(String, String)> {
        let c = MARKER.captures(line.trim())?;
        Some((c[1].to_string(), c.get(2).map_or("", |m| m.as_str()).to_ascii_lowercase()))
    };
    let modified: HashSet<String> = lines
        .iter()
        .filter_map(|l| suffix_of(l))
        .filter(|(_, s)| !s.is_empty() && !s.contains("original"))
        .map(|(id, _)| id)
        .collect();
    let mut out = Vec::new();
    let mut dropping = false;
    for line in &lines {
        let trimmed = line.trim();
        if let Some((id, suffix)) = suffix_of(line) {
            dropping = suffix.contains("original") && modified.contains(&id);
            if !dropping {
                out.push(format!("{SCRIPT_MARKER}{id}"));
            }
            continue;
        }
        if trimmed.starts_with("// sprite:") || trimmed.starts_with("// stage:") {
            dropping = false;
        }
        if !dropping {
            out.push(line.to_string());
        }
    }
    join_lines(&out)
}

fn join_lines<S: AsRef<str>>(lines: &[S]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(l.as_ref());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_rotation_becomes_point_in_direction() {
        assert_eq!(repair_text("set rotation to (90)"), "point in direction (90)\n");
    }

    #[test]
    fn braces_become_then_end() {
        assert_eq!(
            repair_text("if <x> { move (10) steps }"),
            "if <x> then\nmove (10) steps\nend\n"
        );
    }

    #[test]
    fn multiline_braces_with_else() {
        let text = "when green flag clicked\nif <mouse down?> {\n  say [a]\n} else {\n  say [b]\n}\nforever {\nmove (1) steps\n}";
        assert_eq!(
            repair_text(text),
            "when green flag clicked\nif <mouse down?> then\n  say [a]\nelse\n  say [b]\nend\nforever\nmove (1) steps\nend\n"
        );
    }

    #[test]
    fn braces_inside_text_are_kept() {
        assert_eq!(repair_text("say [{hi}]"), "say [{hi}]\n");
    }

    #[test]
    fn fences_are_stripped() {
        let text = "Here is the fix:\n```scratchblocks\nwhen green flag clicked\n```\nHope this helps.";
        assert_eq!(repair_text(text), "when green flag clicked\n\n");
    }

    #[test]
    fn original_duplicate_is_dropped() {
        let text = "// script-id: Boat:1 (original version)\nwhen green flag clicked\nmove (1) steps\n\n// script-id: Boat:1 (modified version)\nwhen green flag clicked\nforever\nmove (1) steps\nend\n";
        let repaired = repair_text(text);
        assert_eq!(repaired, "// script-id: Boat:1\nwhen green flag clicked\nforever\nmove (1) steps\nend\n");
    }

    #[test]
    fn lone_original_keeps_its_script() {
        let repaired = repair_text("// script-id: Boat:1 - original version\nhide\n");
        assert_eq!(repaired, "// script-id: Boat:1\nhide\n");
    }

    #[test]
    fn typography_is_normalized() {
        assert_eq!(repair_text("say [\u{201c}hi\u{201d}] \u{2013}"), "say [\"hi\"] -\n");
    }

    #[test]
    fn prose_lines_are_dropped() {
        assert_eq!(repair_text("Here is the code:\nhide\nThat should work now."), "hide\n");
    }
}
