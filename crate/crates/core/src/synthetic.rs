//! Seeded synthetic corpora: radio-style dialogues with call-up openers,
//! and two-topic dialogues with disjoint vocabularies.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dialogue::{Corpus, Dialogue, LabeledDialogue, Segmentation};

const STATIONS: [&str; 12] = [
    "Star Alpha",
    "Port Control",
    "Bravo Hotel",
    "Delta Echo",
    "Coast Guard",
    "Sea Breeze",
    "Pilot Station",
    "Nordic Wind",
    "Harbour Master",
    "Ocean Pearl",
    "Marina Bay",
    "Golden Gull",
];

/// Topic lines; `{n}` becomes a number.
const TOPICS: [&[&str]; 6] = [
    &[
        "Requesting berth assignment for arrival at {n} hundred.",
        "Berth {n} is available, approach via the north channel.",
        "Confirm draft of {n} metres for the inner basin.",
        "Mooring crew standing by at berth {n}.",
        "We will need two lines forward and two aft.",
        "Tug assistance is booked for your berthing.",
    ],
    &[
        "What is the latest weather forecast for the bay?",
        "Wind southwest force {n}, visibility moderate.",
        "A gale warning is in force until {n} hundred.",
        "Sea state is rough outside the breakwater.",
        "Fog expected later this evening near the headland.",
        "Barometer is falling steadily, expect heavy swell.",
    ],
    &[
        "Pilot boarding requested at the outer buoy.",
        "Pilot boat will be alongside in {n} minutes.",
        "Rig the pilot ladder on the starboard side.",
        "Ladder rigged {n} metres above the waterline.",
        "Reduce speed to {n} knots for the transfer.",
        "Pilot is aboard and heading to the bridge.",
    ],
    &[
        "We require bunkers on arrival, about {n} tonnes.",
        "Fuel barge can meet you at anchorage {n}.",
        "Please confirm grade of diesel required.",
        "Marine gasoil, low sulphur, {n} tonnes.",
        "Bunkering hoses ready on the port side.",
        "Fuel delivery scheduled for tomorrow morning.",
    ],
    &[
        "We have an injured crew member aboard.",
        "Describe the nature of the injury, over.",
        "Deep cut to the hand, bleeding controlled.",
        "Ambulance will wait at pier {n} on arrival.",
        "Medical advice is to keep the wound elevated.",
        "Casualty is conscious and stable.",
    ],
    &[
        "Outbound vessel passing buoy {n} shortly.",
        "Keep clear of the ferry crossing the fairway.",
        "Traffic is heavy in the main channel today.",
        "Hold position until the tanker has passed.",
        "You are clear to proceed through the channel.",
        "Maintain {n} knots in the restricted zone.",
    ],
];

const CLOSINGS: [&str; 4] = [
    "Roger, thank you, out.",
    "Understood, standing by on channel one six.",
    "Copy that, out.",
    "Thanks for the information, out.",
];

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    template.replace("{n}", &rng.gen_range(2..20).to_string())
}

/// One radio exchange on `topic`: a call-up, an answer, then topic lines.
fn exchange(rng: &mut ChaCha8Rng, topic: usize, len: usize) -> Vec<(String, String)> {
    let mut pair: Vec<&str> = STATIONS.choose_multiple(rng, 2).copied().collect();
    pair.shuffle(rng);
    let (caller, callee) = (pair[0], pair[1]);
    let opener = if rng.gen_bool(0.5) {
        format!("{caller} calling {callee}, over.")
    } else {
        format!("{callee}, this is {caller}, over.")
    };
    let mut turns = vec![
        (caller.to_string(), opener),
        (callee.to_string(), format!("{caller}, {callee}, go ahead.")),
    ];
    let mut lines: Vec<&str> = TOPICS[topic].to_vec();
    lines.shuffle(rng);
    while turns.len() < len {
        let speaker = if turns.len() % 2 == 0 { caller } else { callee };
        let text = match lines.pop() {
            Some(t) => fill(t, rng),
            None => CLOSINGS[rng.gen_range(0..CLOSINGS.len())].to_string(),
        };
        turns.push((speaker.to_string(), text));
    }
    turns
}

/// `count` labeled dialogues of 2 to 4 exchanges, each 3 to 6 utterances on
/// a distinct topic. Gold boundaries sit at every call-up after the first.
pub fn vhf_corpus(name: &str, count: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dialogues = Vec::with_capacity(count);
    for i in 0..count {
        let segments = rng.gen_range(2..=4);
        let mut topics: Vec<usize> = (0..TOPICS.len()).collect();
        topics.shuffle(&mut rng);
        let mut turns = Vec::new();
        let mut boundaries = Vec::new();
        for &topic in &topics[..segments] {
            if !turns.is_empty() {
                boundaries.push(turns.len());
            }
            let len = rng.gen_range(3..=6);
            turns.extend(exchange(&mut rng, topic, len));
        }
        let dialogue = Dialogue::new(
            format!("{name}-{i:03}"),
            turns.iter().map(|(s, t)| (Some(s.as_str()), t.as_str())),
        );
        let gold = Segmentation::new(dialogue.len(), boundaries).expect("exchange starts are valid gaps");
        dialogues.push(LabeledDialogue {
            dialogue,
            gold: Some(gold),
        });
    }
    Corpus {
        name: name.to_string(),
        dialogues,
    }
}

const VOCAB_A: [&str; 12] = [
    "anchor", "chain", "windlass", "shackle", "cable", "seabed", "holding", "scope", "drag",
    "swivel", "fluke", "hawse",
];
const VOCAB_B: [&str; 12] = [
    "engine", "piston", "coolant", "turbo", "injector", "crankcase", "governor", "exhaust",
    "lubricant", "gearbox", "propeller", "shaft",
];

/// Dialogues of two 10-utterance topics drawn from disjoint vocabularies;
/// the gold boundary is gap 10.
pub fn two_topic_corpus(count: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dialogues = Vec::with_capacity(count);
    for i in 0..count {
        let (first, second) = if rng.gen_bool(0.5) {
            (&VOCAB_A, &VOCAB_B)
        } else {
            (&VOCAB_B, &VOCAB_A)
        };
        let mut texts = Vec::with_capacity(20);
        for vocab in [first, second] {
            for _ in 0..10 {
                let len = rng.gen_range(4..=7);
                let words: Vec<&str> = (0..len).map(|_| *vocab.choose(&mut rng).expect("nonempty")).collect();
                texts.push(words.join(" "));
            }
        }
        let dialogue = Dialogue::from_texts(format!("tt-{i:03}"), texts);
        dialogues.push(LabeledDialogue {
            dialogue,
            gold: Some(Segmentation::new(20, vec![10]).expect("valid")),
        });
    }
    Corpus {
        name: "two-topic".to_string(),
        dialogues,
    }
}
