//! Randomized suites shared by the per-module tests (small counts) and the
//! acceptance run (full counts). Each returns how many cases disagreed with
//! the oracle instead of panicking, so callers can report totals.

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use flhhe_core::lhe::LheContext;
use flhhe_core::ring::{ModulusId, RingContext, RingParams, RnsModulus, SmallModulus, DEFAULT_Q_PRIMES};
use flhhe_core::stream::{Lane, Nonce, ShallowStream, SymKey, LANES};
use flhhe_core::transcipher::{decomp_all, decrypt_keystream, decrypt_lanes, encrypt_sym_key, eval_keystream, hhe_eval_sum};
use flhhe_core::SlotVector;

use super::oracle;

#[derive(Clone, Debug, Default)]
pub struct Tally {
    pub cases: usize,
    pub failures: usize,
}

impl Tally {
    fn record(&mut self, ok: bool) {
        self.cases += 1;
        self.failures += (!ok) as usize;
    }

    pub fn merge(&mut self, other: &Tally) {
        self.cases += other.cases;
        self.failures += other.failures;
    }
}

const NTT_DEGREES: [usize; 4] = [16, 32, 64, 128];

/// NTT-based products against the schoolbook product, alternating between
/// `Z_t` and the RNS ciphertext ring over several degrees.
pub fn ntt_vs_schoolbook(cases: usize, seed: u64) -> Tally {
    let mut tally = Tally::default();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in 0..cases {
        let n = NTT_DEGREES[(i / 2) % NTT_DEGREES.len()];
        let ok = if i % 2 == 0 {
            let r = RingContext::new(SmallModulus::new(65537), n, ModulusId::PLAIN).unwrap();
            let (a, b) = (r.sample_uniform(&mut rng), r.sample_uniform(&mut rng));
            let got = r.mul(&a, &b).unwrap();
            let big = |p: &[u64]| p.iter().map(|&c| BigInt::from(c)).collect::<Vec<_>>();
            oracle::negacyclic_mul(&big(a.coeffs()), &big(b.coeffs()), &BigInt::from(65537)) == big(got.coeffs())
        } else {
            let r = RingContext::new(RnsModulus::new(DEFAULT_Q_PRIMES), n, ModulusId::CIPHER).unwrap();
            let (a, b) = (r.sample_uniform(&mut rng), r.sample_uniform(&mut rng));
            let got = r.mul(&a, &b).unwrap();
            let m = r.modulus();
            let big = |p: &[_]| p.iter().map(|c| oracle::big(&m.compose(c))).collect::<Vec<_>>();
            oracle::negacyclic_mul(&big(a.coeffs()), &big(b.coeffs()), &oracle::big(m.value())) == big(got.coeffs())
        };
        tally.record(ok);
    }
    tally
}

fn random_slots(ctx: &LheContext, rng: &mut ChaCha20Rng) -> SlotVector {
    let t = ctx.t();
    SlotVector::new((0..ctx.degree()).map(|_| rng.gen_range(0..t)).collect(), t).unwrap()
}

/// Fresh keys every 10 cases; each case encrypts a random vector and decrypts it.
pub fn enc_dec_roundtrips(degree: usize, cases: usize, seed: u64) -> Tally {
    let ctx = LheContext::new(RingParams::with_degree(degree)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    let mut keys = ctx.keygen(&mut rng);
    for i in 0..cases {
        if i % 10 == 0 {
            keys = ctx.keygen(&mut rng);
        }
        let v = random_slots(&ctx, &mut rng);
        let ct = ctx.encrypt(&keys.1, &v, &mut rng).unwrap();
        tally.record(ctx.decrypt(&keys.0, &ct) == v);
    }
    tally
}

#[derive(Clone, Debug, Default)]
pub struct OpTallies {
    pub add: Tally,
    pub sub: Tally,
    pub mul_plain: Tally,
    pub mul_ct: Tally,
}

impl OpTallies {
    pub fn total(&self) -> Tally {
        let mut t = Tally::default();
        for x in [&self.add, &self.sub, &self.mul_plain, &self.mul_ct] {
            t.merge(x);
        }
        t
    }
}

/// Each homomorphic operation `cases` times against slot-wise arithmetic mod t.
pub fn homomorphic_ops(degree: usize, cases: usize, seed: u64) -> OpTallies {
    let ctx = LheContext::new(RingParams::with_degree(degree)).unwrap();
    let t = ctx.t();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (sk, pk, rlk) = ctx.keygen(&mut rng);
    let mut out = OpTallies::default();
    for _ in 0..cases {
        let v = random_slots(&ctx, &mut rng);
        let w = random_slots(&ctx, &mut rng);
        let a = ctx.encrypt(&pk, &v, &mut rng).unwrap();
        let b = ctx.encrypt(&pk, &w, &mut rng).unwrap();
        let (x, y) = (v.as_slice(), w.as_slice());
        let dec = |ct| ctx.decrypt(&sk, &ct).into_inner();
        out.add.record(dec(ctx.add_ct(&a, &b).unwrap()) == oracle::add_mod(x, y, t));
        out.sub.record(dec(ctx.sub_ct(&a, &b).unwrap()) == oracle::sub_mod(x, y, t));
        out.mul_plain.record(dec(ctx.mul_plain(&a, &w).unwrap()) == oracle::mul_mod(x, y, t));
        out.mul_ct.record(dec(ctx.mul_ct(&a, &b, &rlk).unwrap()) == oracle::mul_mod(x, y, t));
    }
    out
}

/// Homomorphic depth-3 keystream for `keys` random keys, every lane and
/// slot compared with the u128 oracle.
pub fn keystream_depth3(degree: usize, keys: usize, seed: u64) -> Tally {
    let ctx = LheContext::new(RingParams::with_degree(degree)).unwrap();
    let stream = ShallowStream::new(ctx.t(), degree);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (sk, pk, rlk) = ctx.keygen(&mut rng);
    let mut tally = Tally::default();
    for _ in 0..keys {
        let key = SymKey::generate(ctx.t(), &mut rng);
        let nonce = Nonce::generate(&mut rng);
        let ek = encrypt_sym_key(&ctx, &pk, &key, &mut rng).unwrap();
        let z = eval_keystream(&ctx, &rlk, &stream, &ek, &nonce).unwrap();
        let dec = decrypt_keystream(&ctx, &sk, &z);
        let ok = (0..degree).all(|s| {
            let want = oracle::keystream_block(&stream, &key, &nonce, s);
            let plain = stream.keystream_block(&key, &nonce, s);
            want == plain && Lane::all().all(|l| dec[l.index()].as_slice()[s] == want[l.index()])
        });
        tally.record(ok);
    }
    tally
}

/// Full transcipher-and-sum trials: 1 to 3 clients with random keys, nonces
/// and full-capacity messages; the decrypted sum must equal the big-integer
/// sum reduced mod t.
pub fn aggregate_trials(degree: usize, trials: usize, seed: u64) -> Tally {
    let ctx = LheContext::new(RingParams::with_degree(degree)).unwrap();
    let t = ctx.t();
    let stream = ShallowStream::new(t, degree);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (sk, pk, rlk) = ctx.keygen(&mut rng);
    let count = degree * LANES;
    let mut tally = Tally::default();
    for i in 0..trials {
        let clients = 1 + i % 3;
        let mut msgs = Vec::new();
        let mut sets = Vec::new();
        for _ in 0..clients {
            let key = SymKey::generate(t, &mut rng);
            let nonce = Nonce::generate(&mut rng);
            let ek = encrypt_sym_key(&ctx, &pk, &key, &mut rng).unwrap();
            let msg: Vec<u64> = (0..count).map(|_| rng.gen_range(0..t)).collect();
            let sym = stream.encrypt(&key, nonce, &msg).unwrap();
            let z = eval_keystream(&ctx, &rlk, &stream, &ek, &nonce).unwrap();
            sets.push(decomp_all(&ctx, &sym, &z).unwrap());
            msgs.push(msg);
        }
        let sum = hhe_eval_sum(&ctx, &sets, ctx.params().max_clients).unwrap();
        tally.record(decrypt_lanes(&ctx, &sk, &sum) == oracle::big_sum_mod(&msgs, t));
    }
    tally
}

/// Largest relative error between backprop and central differences over
/// `per_layer` random coordinates of each layer. First-layer columns are
/// drawn from pixels that are lit somewhere in the batch, since the others
/// have an exactly zero gradient.
pub fn gradient_check(data: &flhhe_core::mlp::Mnist, per_layer: usize, seed: u64) -> f64 {
    use flhhe_core::mlp::{finite_difference, ModelWeights, HIDDEN, INPUT, OUTPUT};
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w = ModelWeights::he_uniform(&mut rng);
    let idx: Vec<usize> = (0..32).map(|_| rng.gen_range(0..data.train.len())).collect();
    let x = data.train.batch(&idx);
    let labels: Vec<u8> = idx.iter().map(|&i| data.train.label(i)).collect();
    let g = w.loss_and_grad(x.view(), &labels);
    let lit: Vec<usize> = (0..INPUT).filter(|&c| x.column(c).iter().any(|&v| v > 0.0)).collect();
    let rel = |a: f64, n: f64| {
        let scale = a.abs().max(n.abs());
        if scale < 1e-10 { 0.0 } else { (a - n).abs() / scale }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..per_layer {
        let (r, c) = (rng.gen_range(0..HIDDEN), lit[rng.gen_range(0..lit.len())]);
        worst = worst.max(rel(g.w1[[r, c]], finite_difference(&w, x.view(), &labels, 1, r, c, 1e-5)));
        let (r, c) = (rng.gen_range(0..OUTPUT), rng.gen_range(0..HIDDEN));
        worst = worst.max(rel(g.w2[[r, c]], finite_difference(&w, x.view(), &labels, 2, r, c, 1e-5)));
    }
    worst
}
