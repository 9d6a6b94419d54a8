//! Token replacement, transliteration and seeded synonym substitution.

use std::collections::BTreeMap;

use edos_core::textnorm::{normalize, substitute_lexical, NormConfig};

pub fn run_example() -> edos_core::Result<()> {
    let mut cfg = NormConfig::default();
    cfg.validate()?;
    let raw = [
        "@maria_99 read this https://example.com/post?id=7 before commenting",
        "Write to help@example.org or call +1 (555) 010-9999, it costs $40",
        "Déjà vu at the café, such a naïve take",
    ];
    for text in raw {
        let out = normalize(text, &cfg);
        println!("{text}\n  -> {out}");
        assert_eq!(normalize(&out, &cfg), out);
    }

    cfg.substitutions = BTreeMap::from([
        (
            "woman".to_string(),
            vec!["lady".to_string(), "female".to_string()],
        ),
        ("women".to_string(), vec!["ladies".to_string()]),
    ]);
    cfg.substitution_seed = 7;
    let text = "Women say a woman should decide";
    let once = substitute_lexical(text, &cfg);
    println!("{text}\n  -> {once}");
    assert_eq!(once, substitute_lexical(text, &cfg));
    Ok(())
}

fn main() -> edos_core::Result<()> {
    run_example()
}
