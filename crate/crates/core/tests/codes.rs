use puf_entropy::codes::{code_by_name, coset_leaders, LinearBlockCode, Word};

const SMALL: [&str; 5] = ["rep3", "rep5", "rep7", "bch7_4_1", "bch15_5_3"];

fn codes() -> Vec<LinearBlockCode> {
    SMALL.iter().map(|n| code_by_name(n).unwrap()).collect()
}

#[test]
fn every_word_has_a_unique_decomposition() {
    for code in codes() {
        let leaders = coset_leaders(&code).unwrap();
        let n = code.n();
        let mut hits = vec![0u8; 1 << n];
        for &w in code.codewords() {
            for &e in leaders.leaders() {
                hits[(w ^ e) as usize] += 1;
            }
        }
        assert!(hits.iter().all(|&h| h == 1), "{}", code.name());
    }
}

#[test]
fn leaders_have_minimum_weight_in_their_coset() {
    for code in codes() {
        let leaders = coset_leaders(&code).unwrap();
        for y in 0..(1 as Word) << code.n() {
            let leader = leaders.leader_for(code.syndrome(y));
            assert_eq!(code.syndrome(leader), code.syndrome(y));
            assert!(leader.count_ones() <= y.count_ones(), "{} {y:b}", code.name());
        }
    }
}

#[test]
fn encoding_is_injective() {
    for name in ["bch15_5_3", "bch31_6_7", "bch63_7_15", "bch127_8_31"] {
        let code = code_by_name(name).unwrap();
        let mut words = code.codewords().to_vec();
        words.sort_unstable();
        words.dedup();
        assert_eq!(words.len(), 1 << code.k(), "{name}");
    }
}

#[test]
fn repetition_leaders_are_all_low_weight_words() {
    for n in [3usize, 5, 7] {
        let code = code_by_name(&format!("rep{n}")).unwrap();
        let t = (n - 1) / 2;
        let mut leaders = coset_leaders(&code).unwrap().leaders().to_vec();
        leaders.sort_unstable();
        let mut expected: Vec<Word> = (0..(1 as Word) << n).filter(|w| w.count_ones() as usize <= t).collect();
        expected.sort_unstable();
        assert_eq!(leaders, expected);
    }
}

#[test]
fn large_codes_decompose_on_samples() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
    let code = code_by_name("bch31_6_7").unwrap();
    let leaders = coset_leaders(&code).unwrap();
    let mask: Word = (1 << 31) - 1;
    for _ in 0..100_000 {
        let y = rng.gen::<u128>() & mask;
        let e = leaders.leader_for(code.syndrome(y));
        let w = y ^ e;
        assert_eq!(code.syndrome(w), 0);
        assert!(code.codewords().contains(&w));
    }
}
