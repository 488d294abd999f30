//! Seeded generator for a separable cue-word corpus.
//!
//! Every instance contains one chemical/disease mention pair and a cue
//! token that fully determines the gold predicate, so a bag-of-cue-words
//! rule scores a perfect micro-F1. Useful for smoke tests and for
//! demonstrating the training loop end to end without real data.

use crate::data::{Mention, REInstance, Relation};
use crate::schema::PredicateSchema;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CHEMICAL: &str = "Chemical";
pub const DISEASE: &str = "Disease";

/// Cue token per non-NULL predicate, in schema order.
pub const CUES: [(&str, &str); 3] = [
    ("TREATS", "treats"),
    ("CAUSES", "causes"),
    ("PREVENTS", "prevents"),
];

const CHEMICALS: [&str; 8] = [
    "tamoxifen",
    "aspirin",
    "ibuprofen",
    "metformin",
    "insulin",
    "heparin",
    "penicillin",
    "lidocaine",
];

const DISEASES: [&str; 8] = [
    "cancer",
    "diabetes",
    "migraine",
    "asthma",
    "arthritis",
    "influenza",
    "ulcer",
    "anemia",
];

const FILLERS: [&str; 10] = [
    "study", "reported", "patients", "daily", "trial", "results", "clinic", "cohort", "notes",
    "records",
];

/// The fixed schema of the synthetic corpus.
pub fn schema() -> PredicateSchema {
    PredicateSchema::parse_str(
        "[predicates]\n\
         NULL\n\
         TREATS\n\
         CAUSES\n\
         PREVENTS\n\
         \n\
         [entity_types]\n\
         Chemical\n\
         Disease\n\
         \n\
         [templates]\n\
         NULL = There are no relations between the @subject@ and the @object@.\n\
         TREATS = Applies a @subject@ remedy with the object of effecting a cure or managing a @object@ condition.\n\
         CAUSES = The @subject@ brings about or worsens the @object@ condition.\n\
         PREVENTS = The @subject@ stops the @object@ from developing or recurring.\n",
    )
    .expect("built-in schema is valid")
}

fn push_filler(tokens: &mut Vec<String>, rng: &mut ChaCha8Rng, max: usize) {
    let n = rng.random_range(0..=max);
    for _ in 0..n {
        tokens.push(FILLERS.choose(rng).expect("non-empty").to_string());
    }
}

/// Generates `n` instances under the given seed. Ids are
/// `{prefix}{index}`, so different splits should use different prefixes.
pub fn generate(n: usize, seed: u64, prefix: &str) -> Vec<REInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (predicate, cue) = CUES[rng.random_range(0..CUES.len())];
            let chem = *CHEMICALS.choose(&mut rng).expect("non-empty");
            let dis = *DISEASES.choose(&mut rng).expect("non-empty");
            let style = rng.random_range(0..100);

            let mut tokens: Vec<String> = Vec::new();
            let mut mentions = Vec::new();
            let mut gold = Vec::new();
            push_filler(&mut tokens, &mut rng, 2);
            if style < 55 {
                // forward order: chemical, cue, disease
                tokens.push("the".to_string());
                mentions.push(mention(&mut tokens, chem, CHEMICAL));
                tokens.push(cue.to_string());
                tokens.push("the".to_string());
                mentions.push(mention(&mut tokens, dis, DISEASE));
                gold.push(Relation {
                    subject: 0,
                    object: 1,
                    predicate: predicate.to_string(),
                });
            } else if style < 85 {
                // reversed surface order, same roles: "the ulcer that
                // lidocaine causes"
                tokens.push("the".to_string());
                mentions.push(mention(&mut tokens, dis, DISEASE));
                tokens.push("that".to_string());
                mentions.push(mention(&mut tokens, chem, CHEMICAL));
                tokens.push(cue.to_string());
                gold.push(Relation {
                    subject: 1,
                    object: 0,
                    predicate: predicate.to_string(),
                });
            } else {
                // two chemical subjects sharing one disease object
                let chem2 = *CHEMICALS.choose(&mut rng).expect("non-empty");
                mentions.push(mention(&mut tokens, chem, CHEMICAL));
                tokens.push("and".to_string());
                mentions.push(mention(&mut tokens, chem2, CHEMICAL));
                tokens.push(cue.to_string());
                tokens.push("the".to_string());
                mentions.push(mention(&mut tokens, dis, DISEASE));
                gold.push(Relation {
                    subject: 0,
                    object: 2,
                    predicate: predicate.to_string(),
                });
                gold.push(Relation {
                    subject: 1,
                    object: 2,
                    predicate: predicate.to_string(),
                });
            }
            push_filler(&mut tokens, &mut rng, 2);

            REInstance {
                id: format!("{prefix}{i}"),
                tokens,
                mentions,
                gold,
            }
        })
        .collect()
}

fn mention(tokens: &mut Vec<String>, surface: &str, entity_type: &str) -> Mention {
    let start = tokens.len();
    tokens.push(surface.to_string());
    Mention {
        start,
        end: tokens.len(),
        entity_type: entity_type.to_string(),
    }
}
