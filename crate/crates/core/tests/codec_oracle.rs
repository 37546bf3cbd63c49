mod support;

use auditreg_core::{Codec, CodecMode, ProtocolParams, Share};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use support::field;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn any_tau_shares_reconstruct(f in 1usize..=3, v in proptest::collection::vec(any::<u8>(), 0..96), seed in any::<u64>(), dispersal in any::<bool>()) {
        let params = ProtocolParams::standard(f).unwrap();
        let mode = if dispersal { CodecMode::Dispersal } else { CodecMode::Shamir };
        let codec = Codec::new(params, mode);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (mut shares, _) = codec.split(&v, &mut rng).unwrap();
        prop_assert_eq!(shares.len(), params.n);
        shares.shuffle(&mut rng);
        let picked: Vec<Share> = shares.iter().take(params.tau).cloned().collect();
        prop_assert_eq!(codec.reconstruct(&picked).unwrap(), v.clone());
        prop_assert!(codec.reconstruct(&picked[..params.tau - 1]).is_err());
        if mode == CodecMode::Shamir {
            // every share lies on one polynomial of degree < tau with the secret at zero
            for pos in 0..v.len() {
                let pts: Vec<(u8, u8)> = picked.iter().map(|s| (s.index as u8, s.bytes[pos])).collect();
                let c = field::interpolate(&pts).unwrap();
                prop_assert_eq!(c[0], v[pos]);
                for s in &shares {
                    prop_assert_eq!(field::eval(&c, s.index as u8), s.bytes[pos]);
                }
            }
        }
    }

    #[test]
    fn reference_field_is_a_field(a in 1u8..=255, b in any::<u8>(), c in any::<u8>()) {
        prop_assert_eq!(field::mul(a, field::inv(a)), 1);
        prop_assert_eq!(field::mul(a, b ^ c), field::mul(a, b) ^ field::mul(a, c));
        prop_assert_eq!(field::mul(field::mul(a, b), c), field::mul(a, field::mul(b, c)));
        prop_assert_eq!(field::mul(a, b), auditreg_core::gf256::mul(a, b));
    }
}
