use cmox::corpus::{
    class_distribution, parse_tsv, synth_generate, LabelClass, LabeledCorpus, Language, Record, SynthSpec,
    KANNADA_TRAIN_COUNTS,
};
use proptest::prelude::*;

fn language_strategy() -> impl Strategy<Value = Language> {
    prop::sample::select(Language::ALL.to_vec())
}

fn corpus_strategy() -> impl Strategy<Value = LabeledCorpus> {
    (language_strategy(), any::<bool>(), 1usize..30).prop_flat_map(|(language, has_ids, n)| {
        let labels = prop::sample::select(language.label_set().to_vec());
        // texts avoid tabs and line breaks, which the format cannot carry
        let text = "[a-zA-Z0-9 .,!?அ-ஹക-ഹಅ-ಹ😀]{1,30}";
        prop::collection::vec((text, labels), n).prop_map(move |rows| {
            let records = rows
                .into_iter()
                .enumerate()
                .map(|(i, (text, label))| Record {
                    id: if has_ids {
                        format!("doc-{i}")
                    } else {
                        format!("r{}", i + 1)
                    },
                    text,
                    label: Some(label),
                })
                .collect();
            LabeledCorpus::new(language, records, has_ids).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn tsv_serialization_is_a_fixed_point(corpus in corpus_strategy()) {
        let text = corpus.to_tsv();
        let back = parse_tsv(&text, corpus.language, corpus.has_ids, true).unwrap();
        prop_assert_eq!(back.records(), corpus.records());
        prop_assert_eq!(back.to_tsv(), text);
    }

    #[test]
    fn distribution_sums_to_corpus_size(corpus in corpus_strategy()) {
        let dist = class_distribution(&corpus).unwrap();
        prop_assert_eq!(dist.values().sum::<usize>(), corpus.len());
        prop_assert_eq!(dist.len(), corpus.language.label_set().len());
    }

    #[test]
    fn synth_is_a_pure_function_of_spec_and_seed(size in 1usize..200, seed in any::<u64>()) {
        let spec = SynthSpec::kannada_like(size);
        prop_assert_eq!(synth_generate(&spec, seed).unwrap(), synth_generate(&spec, seed).unwrap());
    }
}

#[test]
fn header_line_is_accepted_with_and_without_ids() {
    let plain = "text\tcategory\nnalla padam\tNot_offensive\n";
    let ided = "id\ttext\tcategory\nx1\tnalla padam\tNot_offensive\n";
    let a = parse_tsv(plain, Language::Tamil, false, true).unwrap();
    let b = parse_tsv(ided, Language::Tamil, true, true).unwrap();
    assert_eq!(a.records()[0].text, b.records()[0].text);
    assert_eq!(a.records()[0].id, "r1");
    assert_eq!(b.records()[0].id, "x1");
}

#[test]
fn synthetic_counts_follow_the_configured_ratios() {
    let spec = SynthSpec::kannada_like(2000);
    let corpus = synth_generate(&spec, 7).unwrap();
    let dist = class_distribution(&corpus).unwrap();
    let total: f64 = KANNADA_TRAIN_COUNTS.iter().map(|(_, w)| w).sum();
    for (class, weight) in KANNADA_TRAIN_COUNTS {
        let expected = weight / total * 2000.0;
        let got = dist[&class] as f64;
        assert!((got - expected).abs() <= 1.0, "{class:?}: {got} vs {expected:.2}");
        assert!((got / 2000.0 - weight / total).abs() <= 0.02);
    }
    assert_eq!(
        dist[&LabelClass::NotLanguage],
        spec.class_counts()
            .iter()
            .find(|(c, _)| *c == LabelClass::NotLanguage)
            .unwrap()
            .1
    );
}

#[test]
fn different_seeds_give_different_texts() {
    let spec = SynthSpec::kannada_like(50);
    let a = synth_generate(&spec, 1).unwrap();
    let b = synth_generate(&spec, 2).unwrap();
    assert_ne!(a.to_tsv(), b.to_tsv());
    assert_eq!(class_distribution(&a).unwrap(), class_distribution(&b).unwrap());
}
