//! Line tokenizer for scratchblocks.

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// A bare word. `glued` is set when no whitespace separates it from the
    /// previous token.
    Word { text: String, glued: bool, col: usize },
    Round { toks: Vec<Tok>, raw: String, col: usize },
    /// Square group content is kept raw, escapes included.
    Square { raw: String, col: usize },
    Angle { toks: Vec<Tok>, raw: String, col: usize },
}

impl Tok {
    pub(crate) fn col(&self) -> usize {
        match self {
            Tok::Word { col, .. } | Tok::Round { col, .. } | Tok::Square { col, .. } | Tok::Angle { col, .. } => *col,
        }
    }

    pub(crate) fn word(&self) -> Option<&str> {
        match self {
            Tok::Word { text, .. } => Some(text),
            _ => None,
        }
    }

    pub(crate) fn is_glued(&self) -> bool {
        matches!(self, Tok::Word { glued: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LexError {
    pub col: usize,
    pub message: String,
}

/// Tokenizes one line. A `//` at the outer level that starts the line or
/// follows whitespace begins a comment that runs to the end of the line.
pub(crate) fn lex_line(line: &str) -> Result<Vec<Tok>, LexError> {
    let chars: Vec<char> = line.chars().collect();
    let mut lexer = Lexer { chars: &chars, pos: 0 };
    lexer.sequence(None)
}

struct Lexer<'a> {
    chars: &'a [char],
    pos: usize,
}

impl Lexer<'_> {
    fn peek(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn prev_is_space(&self) -> bool {
        self.pos == 0 || self.chars[self.pos - 1].is_whitespace()
    }

    fn err(&self, col: usize, message: &str) -> LexError {
        LexError {
            col,
            message: message.to_string(),
        }
    }

    /// Reads tokens until `close` (consumed) or end of input at the outer level.
    fn sequence(&mut self, close: Option<char>) -> Result<Vec<Tok>, LexError> {
        let mut toks = Vec::new();
        let mut glued = false;
        while let Some(c) = self.peek(0) {
            let col = self.pos + 1;
            if c.is_whitespace() {
                self.pos += 1;
                glued = false;
                continue;
            }
            if close.is_none() && c == '/' && self.peek(1) == Some('/') && self.prev_is_space() {
                return Ok(toks);
            }
            let followed_by_space = self.peek(1).is_none_or(char::is_whitespace);
            if Some(c) == close {
                let operator = c == '>' && self.prev_is_space() && followed_by_space && self.peek(1).is_some();
                if !operator {
                    self.pos += 1;
                    return Ok(toks);
                }
            }
            match c {
                '(' => {
                    let start = self.pos + 1;
                    self.pos += 1;
                    let inner = self.sequence(Some(')')).map_err(|e| self.unclosed(e, col, '('))?;
                    let raw = self.chars[start..self.pos - 1].iter().collect();
                    toks.push(Tok::Round { toks: inner, raw, col });
                }
                '<' if !followed_by_space => {
                    let start = self.pos + 1;
                    self.pos += 1;
                    let inner = self.sequence(Some('>')).map_err(|e| self.unclosed(e, col, '<'))?;
                    let raw = self.chars[start..self.pos - 1].iter().collect();
                    toks.push(Tok::Angle { toks: inner, raw, col });
                }
                '[' => {
                    self.pos += 1;
                    let raw = self.square().ok_or_else(|| self.err(col, "unclosed `[`"))?;
                    toks.push(Tok::Square { raw, col });
                }
                ')' | ']' => return Err(self.err(col, &format!("unexpected `{c}`"))),
                _ => self.words(&mut toks, glued, close),
            }
            glued = true;
        }
        match close {
            None => Ok(toks),
            Some(_) => Err(self.err(self.pos + 1, "unclosed group")),
        }
    }

    fn unclosed(&self, e: LexError, col: usize, open: char) -> LexError {
        if e.message == "unclosed group" {
            self.err(col, &format!("unclosed `{open}`"))
        } else {
            e
        }
    }

    /// Reads a square group body up to the unescaped `]`.
    fn square(&mut self) -> Option<String> {
        let mut raw = String::new();
        while let Some(c) = self.peek(0) {
            self.pos += 1;
            match c {
                '\\' => {
                    raw.push(c);
                    if let Some(n) = self.peek(0) {
                        raw.push(n);
                        self.pos += 1;
                    }
                }
                ']' => return Some(raw),
                _ => raw.push(c),
            }
        }
        None
    }

    /// Reads one whitespace-delimited word. A trailing `?` becomes its own word.
    fn words(&mut self, toks: &mut Vec<Tok>, glued: bool, close: Option<char>) {
        let col = self.pos + 1;
        let mut text = String::new();
        while let Some(c) = self.peek(0) {
            if c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']') || Some(c) == close {
                break;
            }
            if c == '<' && text.is_empty() {
                break;
            }
            if c == '\\' {
                text.push(c);
                self.pos += 1;
                if let Some(n) = self.peek(0) {
                    text.push(n);
                    self.pos += 1;
                }
                continue;
            }
            text.push(c);
            self.pos += 1;
        }
        if text.is_empty() {
            // a lone `<` or `>` operator
            let c = self.peek(0).unwrap_or(' ');
            self.pos += 1;
            toks.push(Tok::Word {
                text: c.to_string(),
                glued,
                col,
            });
            return;
        }
        push_split(toks, text, glued, col);
    }
}

fn push_split(toks: &mut Vec<Tok>, text: String, glued: bool, col: usize) {
    if text.len() > 1 && text.ends_with('?') && !text.ends_with("\\?") {
        let head = text[..text.len() - 1].to_string();
        let n = head.chars().count();
        toks.push(Tok::Word { text: head, glued, col });
        toks.push(Tok::Word {
            text: "?".into(),
            glued: true,
            col: col + n,
        });
    } else {
        toks.push(Tok::Word { text, glued, col });
    }
}

/// Splits label text the same way the lexer splits words.
pub(crate) fn split_words(text: &str) -> Vec<String> {
    let mut toks = Vec::new();
    for w in text.split_whitespace() {
        push_split(&mut toks, w.to_string(), false, 0);
    }
    toks.into_iter().filter_map(|t| t.word().map(str::to_string)).collect()
}

/// Removes backslash escapes; `\n` stands for a newline.
pub(crate) fn unescape(raw: &str) -> String {
    let mut out = String::new();
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(n) => out.push(n),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Escapes text for use inside any group.
pub(crate) fn escape(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        match c {
            '\n' => out.push_str("\\n"),
            '\\' | '(' | ')' | '[' | ']' | '<' | '>' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

/// Strips an unescaped trailing ` v` dropdown marker.
pub(crate) fn dropdown(raw: &str) -> Option<&str> {
    let body = raw.strip_suffix(" v")?;
    let backslashes = body.chars().rev().take_while(|c| *c == '\\').count();
    (backslashes % 2 == 0).then_some(body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(toks: &[Tok]) -> Vec<String> {
        toks.iter()
            .map(|t| match t {
                Tok::Word { text, .. } => text.clone(),
                Tok::Round { raw, .. } => format!("({raw})"),
                Tok::Square { raw, .. } => format!("[{raw}]"),
                Tok::Angle { raw, .. } => format!("<{raw}>"),
            })
            .collect()
    }

    #[test]
    fn groups_and_words() {
        let toks = lex_line("if <touching color [swamp v]?> then").unwrap();
        assert_eq!(words(&toks), vec!["if", "<touching color [swamp v]?>", "then"]);
        match &toks[1] {
            Tok::Angle { toks, .. } => assert_eq!(words(toks), vec!["touching", "color", "[swamp v]", "?"]),
            _ => panic!(),
        }
    }

    #[test]
    fn comparison_operators_inside_angles() {
        let toks = lex_line("<(a) > (b)>").unwrap();
        match &toks[0] {
            Tok::Angle { toks, .. } => assert_eq!(words(toks), vec!["(a)", ">", "(b)"]),
            _ => panic!(),
        }
        let toks = lex_line("<(a) < (b)>").unwrap();
        match &toks[0] {
            Tok::Angle { toks, .. } => assert_eq!(words(toks), vec!["(a)", "<", "(b)"]),
            _ => panic!(),
        }
    }

    #[test]
    fn nested_empty_booleans() {
        let toks = lex_line("<not <>>").unwrap();
        match &toks[0] {
            Tok::Angle { toks, .. } => assert_eq!(words(toks), vec!["not", "<>"]),
            _ => panic!(),
        }
    }

    #[test]
    fn escapes_in_squares() {
        let toks = lex_line(r"say [a\]b]").unwrap();
        assert_eq!(words(&toks), vec!["say", r"[a\]b]"]);
        assert_eq!(unescape(r"a\]b"), "a]b");
        assert_eq!(unescape(&escape("x\n(y)")), "x\n(y)");
    }

    #[test]
    fn trailing_comment_is_dropped() {
        let toks = lex_line("move (10) steps // go").unwrap();
        assert_eq!(toks.len(), 3);
        assert!(lex_line("// script-id: A:1").unwrap().is_empty());
    }

    #[test]
    fn question_mark_splits() {
        let toks = lex_line("<mouse down?>").unwrap();
        match &toks[0] {
            Tok::Angle { toks, .. } => {
                assert_eq!(words(toks), vec!["mouse", "down", "?"]);
                assert!(toks[2].is_glued());
            }
            _ => panic!(),
        }
    }

    #[test]
    fn unclosed_group_reports_column() {
        let e = lex_line("move (10 steps").unwrap_err();
        assert_eq!(e.col, 6);
    }

    #[test]
    fn dropdown_marker() {
        assert_eq!(dropdown("swamp v"), Some("swamp"));
        assert_eq!(dropdown(" v"), Some(""));
        assert_eq!(dropdown(r"go\ v"), None);
        assert_eq!(dropdown("swamp"), None);
    }
}
