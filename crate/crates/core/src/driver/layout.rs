//! Path patterns with named single-component captures, e.g.
//! `{activity}/{subject}_{trial}.csv`.
//!
//! Within a component, `{name}` captures one or more characters, `*` matches
//! any run of characters and `?` exactly one. No token ever crosses a `/`, and
//! `**` is rejected.

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Literal(String),
    Capture(String),
    Star,
    Question,
}

#[derive(Debug, Clone)]
struct Component {
    tokens: Vec<Token>,
    regex: Regex,
}

/// A compiled layout pattern.
#[derive(Debug, Clone)]
pub struct LayoutPattern {
    source: String,
    components: Vec<Component>,
}

impl PartialEq for LayoutPattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Display for LayoutPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn valid_capture_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn tokenize(component: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut literal = String::new();
    let mut chars = component.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(c) => name.push(c),
                        None => return Err(format!("unclosed '{{' in {component:?}")),
                    }
                }
                if !valid_capture_name(&name) {
                    return Err(format!("invalid capture name {name:?}"));
                }
                if !literal.is_empty() {
                    tokens.push(Token::Literal(std::mem::take(&mut literal)));
                }
                if matches!(tokens.last(), Some(Token::Capture(_))) {
                    return Err(format!("adjacent captures in {component:?} are ambiguous"));
                }
                tokens.push(Token::Capture(name));
            }
            '}' => return Err(format!("unmatched '}}' in {component:?}")),
            '*' => {
                if chars.peek() == Some(&'*') {
                    return Err("'**' is not supported; captures match single path components".into());
                }
                if !literal.is_empty() {
                    tokens.push(Token::Literal(std::mem::take(&mut literal)));
                }
                tokens.push(Token::Star);
            }
            '?' => {
                if !literal.is_empty() {
                    tokens.push(Token::Literal(std::mem::take(&mut literal)));
                }
                tokens.push(Token::Question);
            }
            c => literal.push(c),
        }
    }
    if !literal.is_empty() {
        tokens.push(Token::Literal(literal));
    }
    Ok(tokens)
}

fn compile(tokens: &[Token]) -> Regex {
    let mut re = String::from("^");
    for t in tokens {
        match t {
            Token::Literal(s) => re.push_str(&regex::escape(s)),
            // positional groups; names are kept in the token list
            Token::Capture(_) => re.push_str("([^/]+?)"),
            Token::Star => re.push_str("[^/]*?"),
            Token::Question => re.push_str("[^/]"),
        }
    }
    re.push('$');
    Regex::new(&re).expect("escaped pattern compiles")
}

impl LayoutPattern {
    pub fn parse(pattern: &str) -> Result<Self, String> {
        let trimmed = pattern.trim();
        if trimmed.is_empty() {
            return Err("layout is empty".into());
        }
        if trimmed.starts_with('/') {
            return Err("layout must be relative to the dataset root".into());
        }
        let mut components = Vec::new();
        for part in trimmed.split('/') {
            if part.is_empty() {
                return Err("layout contains an empty path component".into());
            }
            if part == "." || part == ".." {
                return Err(format!("layout component {part:?} is not allowed"));
            }
            let tokens = tokenize(part)?;
            let regex = compile(&tokens);
            components.push(Component { tokens, regex });
        }
        Ok(Self {
            source: trimmed.to_string(),
            components,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn depth(&self) -> usize {
        self.components.len()
    }

    /// Distinct capture names in order of first appearance.
    pub fn capture_names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.components {
            for t in &c.tokens {
                if let Token::Capture(n) = t {
                    if !out.contains(&n.as_str()) {
                        out.push(n);
                    }
                }
            }
        }
        out
    }

    pub fn has_wildcards(&self) -> bool {
        self.components
            .iter()
            .flat_map(|c| &c.tokens)
            .any(|t| matches!(t, Token::Star | Token::Question))
    }

    /// Matches a relative path given as its components. A capture name that
    /// appears more than once must bind the same text everywhere.
    pub fn match_components(&self, parts: &[&str]) -> Option<BTreeMap<String, String>> {
        if parts.len() != self.components.len() {
            return None;
        }
        let mut captured = BTreeMap::new();
        for (component, part) in self.components.iter().zip(parts) {
            let caps = component.regex.captures(part)?;
            let names = component.tokens.iter().filter_map(|t| match t {
                Token::Capture(n) => Some(n),
                _ => None,
            });
            for (i, name) in names.enumerate() {
                let value = caps.get(i + 1)?.as_str();
                match captured.get(name) {
                    Some(prev) if prev != value => return None,
                    Some(_) => {}
                    None => {
                        captured.insert(name.clone(), value.to_string());
                    }
                }
            }
        }
        Some(captured)
    }

    /// Substitutes captures into a wildcard-free pattern.
    pub fn render(&self, captured: &BTreeMap<String, String>) -> Result<String, String> {
        let mut parts = Vec::with_capacity(self.components.len());
        for component in &self.components {
            let mut part = String::new();
            for t in &component.tokens {
                match t {
                    Token::Literal(s) => part.push_str(s),
                    Token::Capture(n) => part.push_str(
                        captured
                            .get(n)
                            .ok_or_else(|| format!("no value for capture {{{n}}}"))?,
                    ),
                    Token::Star | Token::Question => {
                        return Err("cannot render a pattern with wildcards".into())
                    }
                }
            }
            parts.push(part);
        }
        Ok(parts.join("/"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps(p: &LayoutPattern, path: &str) -> Option<Vec<(String, String)>> {
        let parts: Vec<&str> = path.split('/').collect();
        p.match_components(&parts).map(|m| m.into_iter().collect())
    }

    #[test]
    fn captures_single_components() {
        let p = LayoutPattern::parse("{activity}/{subject}_{trial}.csv").unwrap();
        assert_eq!(p.capture_names(), vec!["activity", "subject", "trial"]);
        let got = caps(&p, "WAL/3_1.csv").unwrap();
        assert_eq!(
            got,
            vec![
                ("activity".into(), "WAL".into()),
                ("subject".into(), "3".into()),
                ("trial".into(), "1".into())
            ]
        );
        assert!(caps(&p, "WAL/3_1.txt").is_none());
        assert!(caps(&p, "WAL/x/3_1.csv").is_none());
        assert!(caps(&p, "3_1.csv").is_none());
    }

    #[test]
    fn first_capture_is_shortest() {
        let p = LayoutPattern::parse("acc_{subject}_{activity}.txt").unwrap();
        let got = caps(&p, "acc_12_WALKING_UPSTAIRS.txt").unwrap();
        assert_eq!(got[0], ("activity".into(), "WALKING_UPSTAIRS".into()));
        assert_eq!(got[1], ("subject".into(), "12".into()));
    }

    #[test]
    fn wildcards() {
        let p = LayoutPattern::parse("*/data_?.csv").unwrap();
        assert!(p.has_wildcards());
        assert!(caps(&p, "anything/data_1.csv").is_some());
        assert!(caps(&p, "anything/data_12.csv").is_none());
    }

    #[test]
    fn repeated_capture_must_agree() {
        let p = LayoutPattern::parse("{subject}/{subject}_x.csv").unwrap();
        assert!(caps(&p, "4/4_x.csv").is_some());
        assert!(caps(&p, "4/5_x.csv").is_none());
    }

    #[test]
    fn rejects_bad_patterns() {
        for bad in ["", "/abs/{x}", "a//b", "**/x.csv", "{Bad}/x", "{open/x", "a}/x", "{a}{b}.csv", "../x"] {
            assert!(LayoutPattern::parse(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn render_substitutes() {
        let p = LayoutPattern::parse("session_{trial}_labels.csv").unwrap();
        let mut m = BTreeMap::new();
        m.insert("trial".to_string(), "2".to_string());
        assert_eq!(p.render(&m).unwrap(), "session_2_labels.csv");
        assert!(p.render(&BTreeMap::new()).is_err());
    }
}
