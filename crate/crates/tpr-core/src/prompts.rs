//! Prompt templates and the candidate-generation question pool.

/// Questions used to elicit detailed candidate responses; one is drawn per
/// task from its deterministic stream. Extendable via config.
pub const QUESTION_POOL: [&str; 8] = [
    "What is the setting or environment in which the image takes place?",
    "Provide an intricate description of every entity in the image.",
    "Can you point out the details that make this image unique?",
    "What are the main elements in this image? Describe them thoroughly.",
    "Identify and describe each object in the image in detail.",
    "Analyze this art image, describing its spatial arrangement, interactive elements, and conceptual message.",
    "Detail the texts and other components in the image in depth, explaining their relevance to the overall picture.",
    "Look at the image and describe the celebrity's facial expressions, clothing, and any distinctive features.",
];

/// Header the decomposition response must carry; bullets under it become
/// semantic units.
pub const FACTS_HEADER: &str = "### Facts:";

/// Header the question-conversion responses must carry.
pub const CONVERTED_HEADER: &str = "### Converted questions:";

pub fn decomposition_prompt(question: &str, answer: &str) -> String {
    format!(
        "You are an expert in extracting facts from the given question-answer pair for an image. \
Your task is to extract and rewrite the facts mentioned in the answers into self-contained sentences. \
Exclude opinions or subjective statements.\n\
\n\
You should present your result in the following format:\n\
\n\
### Facts:\n\
- {{Extracted fact 1}}\n\
- {{Extracted fact 2}}\n\
- ...\n\
\n\
### Question-answer pair:\n\
Question: {question}\n\
Answer: {answer}"
    )
}

pub fn wh_conversion_prompt(sentences: &[&str]) -> String {
    format!(
        "You are an expert at modifying a given declarative sentence into a wh-question sentence. \
Your task is to modify the given declarative sentences one by one into a wh-question form. \
Do not change tenses or add extra content.\n\
\n\
You should present your result in the following format:\n\
\n\
### Converted questions:\n\
- {{Converted question 1}}\n\
- {{Converted question 2}}\n\
- ...\n\
\n\
### Declarative sentences:\n\
{}",
        bullet_list(sentences)
    )
}

pub fn yes_no_conversion_prompt(sentences: &[&str]) -> String {
    format!(
        "You are an expert at modifying a given declarative sentence into a general question sentence. \
Your task is to modify the given declarative sentences one by one into a general question form. \
Do not change tenses or add extra content.\n\
\n\
If the given declarative sentence contains not, no or negative meaning words, you need to check \
the modified general interrogative sentence to make sure that the generated general question \
sentence retains words with not, no or negative meaning words.\n\
\n\
You should present your result in the following format:\n\
\n\
### Converted questions:\n\
- {{Converted question 1}}\n\
- {{Converted question 2}}\n\
- ...\n\
\n\
### Declarative sentences:\n\
{}",
        bullet_list(sentences)
    )
}

/// Pairwise topic-consistency query; answered with a leading Yes/No.
pub fn consistency_query(unit_a: &str, unit_b: &str) -> String {
    format!("Are {unit_a} and {unit_b} describing the same topic? Please answer Yes or No.")
}

pub fn rewrite_prompt(tips: &[&str], question: &str, answer: &str) -> String {
    format!(
        "You are an expert at modifying a declarative answer with several tips. \
Your task is to modify the original answer, which is used to answer the question, based on the \
image and the provided tips. \
The given tips will relate to a specific part of the original answer, and you should use the \
tips to overwrite the corresponding part. \
If there is a conflict between the tips and the image, remember to follow the tips first.\n\
\n\
You should make minimal modifications and maintain style and format with the original answer. \
Only output the modified answer.\n\
\n\
### Tips:\n\
{}\n\
\n\
### Question-answer pair:\n\
Question: {question}\n\
Original Answer: {answer}",
        bullet_list(tips)
    )
}

/// Folds a resampled free-form answer back into one declarative sentence.
pub fn declarative_prompt(question: &str, answer: &str) -> String {
    format!(
        "You are an expert at rewriting a question-answer pair into a single self-contained \
declarative sentence. \
Your task is to combine the given question and its answer into one factual declarative sentence. \
Do not add extra content. Only output the sentence.\n\
\n\
### Question-answer pair:\n\
Question: {question}\n\
Answer: {answer}"
    )
}

fn bullet_list(items: &[&str]) -> String {
    items
        .iter()
        .map(|s| format!("- {s}"))
        .collect::<Vec<_>>()
        .join("\n")
}
