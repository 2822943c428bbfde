use dial_core::llm::{cosine, EmbeddingProvider, HashingEmbedder};

const DISJOINT: [(&str, &str); 20] = [
    ("concatenate strings with a separator", "round numeric value down"),
    ("extract the year from a timestamp", "average salary per department"),
    ("limit the result to ten rows", "replace null with default"),
    ("group values into one list", "absolute difference between numbers"),
    ("cast integer to text", "current system date"),
    ("substring of a name", "maximum order amount"),
    ("regular expression match", "count distinct customers"),
    ("convert time zone", "pad left with zeros"),
    ("window rank over partition", "uppercase letters only"),
    ("json field lookup", "truncate decimal places"),
    ("fetch first rows only", "median of sales"),
    ("days between two dates", "split comma list"),
    ("quoted identifier case", "boolean logical negation"),
    ("empty string literal", "hexadecimal encoding output"),
    ("square root function", "interval arithmetic month"),
    ("trim trailing spaces", "random sample selection"),
    ("modulo remainder operator", "cumulative running total"),
    ("string length characters", "pivot columns into rows"),
    ("percentile continuous distribution", "lowercase email address"),
    ("coalesce missing values", "bitwise shift integer"),
];

#[test]
fn disjoint_vocabularies_are_far_apart() {
    let e = HashingEmbedder::default();
    for (a, b) in DISJOINT {
        let words_a: Vec<&str> = a.split_whitespace().collect();
        assert!(b.split_whitespace().all(|w| !words_a.contains(&w)), "{a} / {b} share a word");
        let s = cosine(&e.embed(a).unwrap(), &e.embed(b).unwrap());
        assert!(s < 0.3, "{a} / {b}: {s}");
    }
}

#[test]
fn cosine_matches_textbook_formula() {
    let e = HashingEmbedder::default();
    let (a, b) = (e.embed("string aggregation per group").unwrap(), e.embed("string aggregation").unwrap());
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((cosine(&a, &b) - dot / (na * nb)).abs() < 1e-12);
    assert!(cosine(&a, &b) > 0.5);
}
