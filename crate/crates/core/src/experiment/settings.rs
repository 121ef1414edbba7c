use super::config::{EmbedBlock, FreqBlock, RunConfig, SvBlock};
use crate::embedfeat::EmbeddingSource;
use crate::freqfeat::FreqFeature;
use crate::gnnembed::WalkStrategy;
use crate::heads::HeadKind;
use crate::{Error, Result};

const SV_TOKEN: &str = "SVs";

fn valid_heads() -> String {
    HeadKind::ALL.map(HeadKind::settings_name).join(", ")
}

fn valid_features() -> String {
    FreqFeature::ALL.map(FreqFeature::settings_name).join(", ")
}

fn valid_sources() -> String {
    EmbeddingSource::ALL.map(EmbeddingSource::settings_name).join(", ")
}

fn is_head_name(s: &str) -> bool {
    HeadKind::from_settings_name(s).is_some()
}

/// Unescapes `\_`, drops whitespace, and closes a head's parenthesis left
/// open before the next head term (`Conv2D(FastText + Conv2D(..)`).
fn compact(text: &str) -> Result<String> {
    let s: String = text.replace("\\_", "_").chars().filter(|c| !c.is_whitespace()).collect();
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len() + 2);
    let mut stack: Vec<bool> = Vec::new();
    let mut ident = String::new();
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '(' => {
                stack.push(is_head_name(&ident));
                ident.clear();
            }
            ')' => {
                if stack.pop().is_none() {
                    return Err(Error::Settings(format!("unbalanced `)` in `{text}`")));
                }
                ident.clear();
            }
            '+' => {
                let rest: String = chars[i + 1..].iter().take_while(|c| c.is_alphanumeric() || **c == '_').collect();
                let opens_head = chars.get(i + 1 + rest.chars().count()) == Some(&'(') && is_head_name(&rest);
                if opens_head && stack.last() == Some(&true) {
                    stack.pop();
                    out.push(')');
                }
                ident.clear();
            }
            _ => ident.push(c),
        }
        out.push(c);
    }
    for _ in 0..stack.len() {
        out.push(')');
    }
    Ok(out)
}

/// Splits on `+` at parenthesis depth zero.
fn split_top(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            '+' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

/// `NAME(inner)` -> (NAME, inner).
fn call(term: &str) -> Option<(&str, &str)> {
    let open = term.find('(')?;
    term.ends_with(')').then(|| (&term[..open], &term[open + 1..term.len() - 1]))
}

fn parse_features(list: &str) -> Result<Vec<FreqFeature>> {
    list.split('+')
        .map(|name| {
            FreqFeature::from_settings_name(name).ok_or_else(|| {
                Error::Settings(format!("unknown frequency feature `{name}`; valid names: {}", valid_features()))
            })
        })
        .collect()
}

enum Term {
    Embed(EmbedBlock),
    Sv(SvBlock),
    Freq(FreqBlock),
    Graph(WalkStrategy),
}

fn parse_term(term: &str) -> Result<Term> {
    if term.is_empty() {
        return Err(Error::Settings("empty term".into()));
    }
    if let Some(g) = WalkStrategy::ALL.into_iter().find(|g| g.settings_name().eq_ignore_ascii_case(term)) {
        return Ok(Term::Graph(g));
    }
    let (name, inner) = call(term).ok_or_else(|| {
        Error::Settings(format!(
            "cannot read term `{term}`; expected HEAD(SOURCE), PCA(features) or one of DeepWalk, Node2Vec, Struc2Vec"
        ))
    })?;
    if name == "PCA" {
        return Ok(Term::Freq(FreqBlock::new(parse_features(inner)?, None)));
    }
    let head = HeadKind::from_settings_name(name)
        .ok_or_else(|| Error::Settings(format!("unknown head `{name}`; valid heads: {}", valid_heads())))?;
    if inner == SV_TOKEN {
        return Ok(Term::Sv(SvBlock { head, pca: false }));
    }
    if let Some(("PCA", list)) = call(inner) {
        if list == SV_TOKEN {
            return Ok(Term::Sv(SvBlock { head, pca: true }));
        }
        return Ok(Term::Freq(FreqBlock::new(parse_features(list)?, Some(head))));
    }
    let source = EmbeddingSource::from_settings_name(inner).ok_or_else(|| {
        Error::Settings(format!("unknown embedding source `{inner}`; valid sources: {}, SVs, PCA(SVs)", valid_sources()))
    })?;
    Ok(Term::Embed(EmbedBlock { head, source }))
}

/// Reads a settings string such as
/// `Conv2D(FastText) + Conv2D(PCA(SVs)) + PCA(unigram + length) + DeepWalk`
/// into a config whose remaining fields are defaults.
pub fn parse_settings(text: &str) -> Result<RunConfig> {
    let compacted = compact(text)?;
    let mut cfg = RunConfig { embed: None, sv: None, freq: None, graph: None, ..RunConfig::default() };
    let dup = |what: &str| Error::Settings(format!("`{text}` has more than one {what} term"));
    for term in split_top(&compacted) {
        match parse_term(term)? {
            Term::Embed(e) => {
                if cfg.embed.replace(e).is_some() {
                    return Err(dup("embedding"));
                }
            }
            Term::Sv(s) => {
                if cfg.sv.replace(s).is_some() {
                    return Err(dup("SV"));
                }
            }
            Term::Freq(f) => {
                if cfg.freq.replace(f).is_some() {
                    return Err(dup("frequency"));
                }
            }
            Term::Graph(g) => {
                if cfg.graph.replace(g).is_some() {
                    return Err(dup("graph"));
                }
            }
        }
    }
    if !cfg.has_text_block() {
        return Err(Error::Settings(format!(
            "`{text}` has no text block; add a head over an embedding, SVs or PCA(features)"
        )));
    }
    Ok(cfg)
}

/// Applies the architecture of `text` to `base`, keeping its other fields.
pub fn apply_settings(base: &RunConfig, text: &str) -> Result<RunConfig> {
    let arch = parse_settings(text)?;
    Ok(RunConfig { embed: arch.embed, sv: arch.sv, freq: arch.freq, graph: arch.graph, ..base.clone() })
}

fn feature_list(features: &[FreqFeature]) -> String {
    features.iter().map(|f| f.settings_name()).collect::<Vec<_>>().join(" + ")
}

/// Canonical settings string: embedding, SV, frequency and graph terms
/// in that order, joined by ` + `.
pub fn format_settings(cfg: &RunConfig) -> String {
    let mut terms = Vec::new();
    if let Some(e) = cfg.embed {
        terms.push(format!("{}({})", e.head.settings_name(), e.source.settings_name()));
    }
    if let Some(s) = cfg.sv {
        let inner = if s.pca { format!("PCA({SV_TOKEN})") } else { SV_TOKEN.to_string() };
        terms.push(format!("{}({inner})", s.head.settings_name()));
    }
    if let Some(f) = &cfg.freq {
        let pca = format!("PCA({})", feature_list(&f.features));
        terms.push(match f.head {
            Some(h) => format!("{}({pca})", h.settings_name()),
            None => pca,
        });
    }
    if let Some(g) = cfg.graph {
        terms.push(g.settings_name().to_string());
    }
    terms.join(" + ")
}

fn term_rank(term: &str) -> usize {
    if !term.contains('(') {
        3
    } else if term.contains(SV_TOKEN) {
        1
    } else if term.contains("PCA(") {
        2
    } else {
        0
    }
}

/// Textual canonical form: `\_` unescaped, whitespace removed, an
/// unclosed head parenthesis repaired, terms ordered embedding / SV /
/// frequency / graph, feature lists in canonical feature order, and
/// ` + ` between terms and features.
pub fn normalize_settings(text: &str) -> Result<String> {
    let compacted = compact(text)?;
    let mut terms: Vec<String> = split_top(&compacted)
        .into_iter()
        .map(|t| {
            let Some(open) = t.find("PCA(") else { return t.to_string() };
            let start = open + 4;
            let end = start + t[start..].find(')').unwrap_or(t.len() - start);
            let mut feats: Vec<&str> = t[start..end].split('+').collect();
            feats.sort_by_key(|f| FreqFeature::from_settings_name(f).map_or(usize::MAX, |x| x as usize));
            format!("{}{}{}", &t[..start], feats.join(" + "), &t[end..])
        })
        .collect();
    terms.sort_by_key(|t| term_rank(t));
    Ok(terms.join(" + "))
}
