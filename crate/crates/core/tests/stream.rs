mod common;

use common::oracle;
use flhhe_core::stream::{block_of, lane_of, Nonce, ShallowStream, SymCiphertext, SymKey, LANES};
use flhhe_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const T: u64 = 65537;

#[test]
fn keystream_matches_oracle() {
    let stream = ShallowStream::new(T, 64);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..20 {
        let key = SymKey::generate(T, &mut rng);
        let nonce = Nonce::generate(&mut rng);
        for b in [0, 1, 63] {
            assert_eq!(stream.keystream_block(&key, &nonce, b), oracle::keystream_block(&stream, &key, &nonce, b));
        }
    }
}

#[test]
fn encrypt_then_decrypt_is_identity() {
    let stream = ShallowStream::new(T, 64);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let key = SymKey::generate(T, &mut rng);
    for len in [0, 1, 15, 16, 17, 64 * LANES] {
        let msg: Vec<u64> = (0..len).map(|_| rng.gen_range(0..T)).collect();
        let ct = stream.encrypt(&key, Nonce::generate(&mut rng), &msg).unwrap();
        assert_eq!(ct.len(), len);
        assert_eq!(stream.decrypt(&key, &ct).unwrap(), msg);
    }
}

#[test]
fn element_layout() {
    assert_eq!((block_of(0), lane_of(0).index()), (0, 0));
    assert_eq!((block_of(17), lane_of(17).index()), (1, 1));
    assert_eq!((block_of(16 * 5 + 15), lane_of(16 * 5 + 15).index()), (5, 15));
}

#[test]
fn keystream_depends_on_key_nonce_and_block() {
    let stream = ShallowStream::new(T, 4);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (k1, k2) = (SymKey::generate(T, &mut rng), SymKey::generate(T, &mut rng));
    let (n1, n2) = (Nonce::generate(&mut rng), Nonce::generate(&mut rng));
    let z = stream.keystream_block(&k1, &n1, 0);
    assert_ne!(z, stream.keystream_block(&k2, &n1, 0));
    assert_ne!(z, stream.keystream_block(&k1, &n2, 0));
    assert_ne!(z, stream.keystream_block(&k1, &n1, 1));
    assert_eq!(z, stream.keystream_block(&k1, &n1, 0));
}

#[test]
fn serialization_roundtrips_and_rejects_junk() {
    let stream = ShallowStream::new(T, 16);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let key = SymKey::generate(T, &mut rng);
    assert_eq!(SymKey::from_bytes(&key.to_bytes(T), T).unwrap(), key);
    assert_eq!(key.to_bytes(T).len(), SymKey::SERIALIZED_LEN);

    let msg: Vec<u64> = (0..100).map(|_| rng.gen_range(0..T)).collect();
    let ct = stream.encrypt(&key, Nonce::generate(&mut rng), &msg).unwrap();
    let bytes = ct.to_bytes(T);
    assert_eq!(bytes.len(), SymCiphertext::serialized_len(100));
    assert_eq!(SymCiphertext::from_bytes(&bytes, T).unwrap(), ct);
    assert!(SymCiphertext::from_bytes(&bytes[..bytes.len() - 1], T).is_err());
    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(SymCiphertext::from_bytes(&bad, T).is_err());
    let mut big_word = bytes;
    let n = big_word.len();
    big_word[n - 4..].copy_from_slice(&(T as u32).to_le_bytes());
    assert!(SymCiphertext::from_bytes(&big_word, T).is_err());
}

#[test]
fn oversized_or_out_of_range_messages_are_refused() {
    let stream = ShallowStream::new(T, 2);
    let key = SymKey::generate(T, &mut ChaCha20Rng::seed_from_u64(5));
    assert!(matches!(stream.encrypt(&key, Nonce([0; 16]), &[0; 33]), Err(Error::BatchOverflow { .. })));
    assert!(stream.encrypt(&key, Nonce([0; 16]), &[T]).is_err());
    assert!(SymKey::new([T; LANES], T).is_err());
}
