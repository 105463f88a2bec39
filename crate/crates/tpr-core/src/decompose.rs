//! Candidate sampling, response decomposition into semantic units, question
//! conversion (wh- and yes-no), and intra-topic self-resampling.
//!
//! All operations are orchestrations over the reference gateway. Temperature
//! policy: 1.0 where the method needs diverse alternatives (candidate
//! sampling, resampling), 0.0 where it needs parseable output (decomposition,
//! conversions, declarativization).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatExchange, Gateway};
use crate::prompts;
use crate::rng::SeedStream;

pub const SAMPLING_TEMPERATURE: f64 = 1.0;
pub const PARSING_TEMPERATURE: f64 = 0.0;
const RESPONSE_MAX_TOKENS: u32 = 512;
const CONVERSION_MAX_TOKENS: u32 = 512;

/// One image + instruction prompt; the unit of pipeline work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationTask {
    pub task_id: String,
    pub image: String,
    pub prompt: String,
    #[serde(default)]
    pub source_tag: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub task_id: String,
    pub response_index: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitOrigin {
    Decomposed { response_index: usize },
    Resampled,
}

/// One declarative fact with provenance, question forms, topic assignment,
/// and labeler score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticUnit {
    pub unit_id: String,
    pub task_id: String,
    pub text: String,
    pub origin: UnitOrigin,
    #[serde(default)]
    pub wh_question: Option<String>,
    #[serde(default)]
    pub yes_no_question: Option<String>,
    #[serde(default)]
    pub topic_id: Option<String>,
    #[serde(default)]
    pub score: Option<f64>,
}

/// Unit ids sort lexicographically in creation order within a task.
pub fn unit_id(task_id: &str, ordinal: usize) -> String {
    format!("{task_id}#u{ordinal:04}")
}

/// Draw the generation question for a task from the pool, deterministically
/// from the task's stream (purpose tag "question_pool").
pub fn draw_question<'p>(pool: &'p [String], global_seed: u64, task_id: &str) -> &'p str {
    assert!(!pool.is_empty(), "question pool must be non-empty");
    let mut stream = SeedStream::new(global_seed, task_id, "question_pool");
    &pool[stream.pick_index(pool.len())]
}

/// Sample `m` candidate responses at sampling temperature.
pub fn sample_candidates(
    gateway: &Gateway,
    task: &CurationTask,
    question: &str,
    m: usize,
) -> Result<Vec<CandidateResponse>> {
    if m < 1 {
        return Err(Error::InvalidParams("m_candidates must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(m);
    for index in 0..m {
        let exchange = ChatExchange::user(
            question,
            Some(&task.image),
            SAMPLING_TEMPERATURE,
            RESPONSE_MAX_TOKENS,
            &format!("{}/cand-{index}", task.task_id),
        );
        let text = gateway.chat_complete(&exchange)?;
        out.push(CandidateResponse {
            task_id: task.task_id.clone(),
            response_index: index,
            text,
        });
    }
    Ok(out)
}

/// Decompose one candidate response into semantic units (bullet order
/// preserved). Retries once with a bumped seed tag on parse failure.
pub fn decompose_response(
    gateway: &Gateway,
    task: &CurationTask,
    question: &str,
    response: &CandidateResponse,
    next_ordinal: &mut usize,
) -> Result<Vec<SemanticUnit>> {
    if response.text.trim().is_empty() {
        return Err(Error::EmptyResponse);
    }
    let prompt = prompts::decomposition_prompt(question, &response.text);
    let base_tag = format!("{}/decomp-{}", task.task_id, response.response_index);
    let facts = request_bullets(gateway, &prompt, prompts::FACTS_HEADER, &base_tag, None)?;
    let mut units = Vec::with_capacity(facts.len());
    for text in facts {
        let id = unit_id(&task.task_id, *next_ordinal);
        *next_ordinal += 1;
        units.push(SemanticUnit {
            unit_id: id,
            task_id: task.task_id.clone(),
            text,
            origin: UnitOrigin::Decomposed {
                response_index: response.response_index,
            },
            wh_question: None,
            yes_no_question: None,
            topic_id: None,
            score: None,
        });
    }
    Ok(units)
}

/// Batched wh-question conversion; arity-checked with retry and a per-unit
/// fallback prompt.
pub fn to_wh_questions(
    gateway: &Gateway,
    sentences: &[String],
    seed_tag_base: &str,
) -> Result<Vec<String>> {
    convert_batch(gateway, sentences, seed_tag_base, prompts::wh_conversion_prompt)
}

/// Single-sentence wh-question conversion.
pub fn to_wh_question(gateway: &Gateway, sentence: &str, seed_tag: &str) -> Result<String> {
    let out = to_wh_questions(gateway, &[sentence.to_string()], seed_tag)?;
    Ok(out.into_iter().next().expect("arity checked"))
}

/// Batched yes-no-question conversion with the negation-preservation
/// instruction included.
pub fn to_yes_no_questions(
    gateway: &Gateway,
    sentences: &[String],
    seed_tag_base: &str,
) -> Result<Vec<String>> {
    convert_batch(gateway, sentences, seed_tag_base, prompts::yes_no_conversion_prompt)
}

pub fn to_yes_no_question(gateway: &Gateway, sentence: &str, seed_tag: &str) -> Result<String> {
    let out = to_yes_no_questions(gateway, &[sentence.to_string()], seed_tag)?;
    Ok(out.into_iter().next().expect("arity checked"))
}

/// Query the reference model `k` times with a topic's wh-question, converting
/// each free-form answer into a declarative resampled unit.
pub fn resample_topic(
    gateway: &Gateway,
    task: &CurationTask,
    wh_question: &str,
    k: usize,
    topic_id: &str,
    next_ordinal: &mut usize,
) -> Result<Vec<SemanticUnit>> {
    if k < 1 {
        return Err(Error::InvalidParams("resample_k must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let ask = ChatExchange::user(
            wh_question,
            Some(&task.image),
            SAMPLING_TEMPERATURE,
            RESPONSE_MAX_TOKENS,
            &format!("{}/rs-{topic_id}-{i}", task.task_id),
        );
        let answer = gateway.chat_complete(&ask)?;
        let declarativize = ChatExchange::user(
            &prompts::declarative_prompt(wh_question, &answer),
            None,
            PARSING_TEMPERATURE,
            CONVERSION_MAX_TOKENS,
            &format!("{}/decl-{topic_id}-{i}", task.task_id),
        );
        let sentence = gateway.chat_complete(&declarativize)?;
        let text = first_sentence_line(&sentence);
        let id = unit_id(&task.task_id, *next_ordinal);
        *next_ordinal += 1;
        out.push(SemanticUnit {
            unit_id: id,
            task_id: task.task_id.clone(),
            text,
            origin: UnitOrigin::Resampled,
            wh_question: Some(wh_question.to_string()),
            yes_no_question: None,
            topic_id: Some(topic_id.to_string()),
            score: None,
        });
    }
    Ok(out)
}

fn convert_batch(
    gateway: &Gateway,
    sentences: &[String],
    seed_tag_base: &str,
    render: fn(&[&str]) -> String,
) -> Result<Vec<String>> {
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
    let prompt = render(&refs);
    for (attempt, tag) in [
        seed_tag_base.to_string(),
        format!("{seed_tag_base}/r1"),
    ]
    .iter()
    .enumerate()
    {
        match request_bullets_once(gateway, &prompt, prompts::CONVERTED_HEADER, tag) {
            Ok(questions) if questions.len() == sentences.len() => return Ok(questions),
            Ok(questions) => {
                log::warn!(
                    "conversion arity mismatch (attempt {attempt}): {} sentences, {} questions",
                    sentences.len(),
                    questions.len()
                );
            }
            Err(Error::ParseFailure(msg)) => {
                log::warn!("conversion parse failure (attempt {attempt}): {msg}");
            }
            Err(e) => return Err(e),
        }
    }
    // per-unit fallback: one sentence per prompt, arity 1 by construction
    let mut out = Vec::with_capacity(sentences.len());
    for (i, sentence) in sentences.iter().enumerate() {
        let prompt = render(&[sentence.as_str()]);
        let tag = format!("{seed_tag_base}/fb{i}");
        let questions = request_bullets_once(gateway, &prompt, prompts::CONVERTED_HEADER, &tag)?;
        match questions.into_iter().next() {
            Some(q) => out.push(q),
            None => {
                return Err(Error::ParseFailure(format!(
                    "per-unit fallback produced no question for sentence {i}"
                )))
            }
        }
    }
    Ok(out)
}

fn request_bullets(
    gateway: &Gateway,
    prompt: &str,
    header: &str,
    base_tag: &str,
    image: Option<&str>,
) -> Result<Vec<String>> {
    match request_bullets_with_image(gateway, prompt, header, base_tag, image) {
        Err(Error::ParseFailure(first)) => {
            log::warn!("parse failure, retrying: {first}");
            request_bullets_with_image(gateway, prompt, header, &format!("{base_tag}/r1"), image)
        }
        other => other,
    }
}

fn request_bullets_with_image(
    gateway: &Gateway,
    prompt: &str,
    header: &str,
    tag: &str,
    image: Option<&str>,
) -> Result<Vec<String>> {
    let exchange = ChatExchange::user(prompt, image, PARSING_TEMPERATURE, CONVERSION_MAX_TOKENS, tag);
    let reply = gateway.chat_complete(&exchange)?;
    parse_bullets_under(header, &reply)
}

fn request_bullets_once(
    gateway: &Gateway,
    prompt: &str,
    header: &str,
    tag: &str,
) -> Result<Vec<String>> {
    request_bullets_with_image(gateway, prompt, header, tag, None)
}

/// Extract the bullet items under `header`, ignoring any leading prose and
/// stopping at the next section header. Accepts `-`, `*`, and numbered
/// bullets.
pub fn parse_bullets_under(header: &str, text: &str) -> Result<Vec<String>> {
    let mut in_section = false;
    let mut bullets = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if !in_section {
            if trimmed.starts_with(header.trim_end_matches(':')) {
                in_section = true;
            }
            continue;
        }
        if trimmed.starts_with("###") {
            break;
        }
        if let Some(item) = strip_bullet(trimmed) {
            if !item.is_empty() {
                bullets.push(item.to_string());
            }
        }
    }
    if !in_section {
        return Err(Error::ParseFailure(format!("missing {header} header")));
    }
    if bullets.is_empty() {
        return Err(Error::ParseFailure(format!("no bullets under {header}")));
    }
    Ok(bullets)
}

fn strip_bullet(line: &str) -> Option<&str> {
    if let Some(rest) = line.strip_prefix("- ").or_else(|| line.strip_prefix("* ")) {
        return Some(rest.trim());
    }
    if line == "-" || line == "*" {
        return Some("");
    }
    // numbered bullets: "1. text" or "2) text"
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(item) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(item.trim());
        }
    }
    None
}

fn first_sentence_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .to_string()
}
