//! Layered public-key encryption with ciphertext-size accounting.
//!
//! Two suites share one interface. The mock suite tags payloads with key ids
//! and reports sizes from a configurable model `(τ1, τ2, τ3)`. The real suite
//! is ECIES over P-256: an uncompressed ephemeral point, the plaintext masked
//! with an HKDF-SHA256 keystream, and a truncated HMAC-SHA256 tag. Each layer
//! adds 85 bytes to a 4-byte payload, so one to three layers measure 712, 1392
//! and 2072 bits.

use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use p256::elliptic_curve::sec1::ToEncodedPoint;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::error::{Error, Result};

/// Maximum number of encryption layers.
pub const MAX_LAYERS: usize = 3;

const POINT_LEN: usize = 65;
const TAG_LEN: usize = 20;
const LAYER_OVERHEAD: usize = POINT_LEN + TAG_LEN;
const PAYLOAD_LEN: usize = 4;
const KDF_INFO: &[u8] = b"augshuffle ecies p256 v1";

/// Fixed-width plaintext symbol; 0 is the sentinel ⊥.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Payload(pub u32);

impl Payload {
    pub const BOTTOM: Payload = Payload(0);

    pub fn is_bottom(self) -> bool {
        self.0 == 0
    }

    pub fn to_bytes(self) -> [u8; PAYLOAD_LEN] {
        self.0.to_be_bytes()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Payload> {
        let arr: [u8; PAYLOAD_LEN] = b
            .try_into()
            .map_err(|_| Error::Decode(format!("payload of {} bytes", b.len())))?;
        Ok(Payload(u32::from_be_bytes(arr)))
    }
}

/// Declared ciphertext sizes in bits for one, two and three layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeModel {
    pub tau1: u64,
    pub tau2: u64,
    pub tau3: u64,
}

impl SizeModel {
    pub const ECIES_256: SizeModel = SizeModel {
        tau1: 712,
        tau2: 1392,
        tau3: 2072,
    };

    pub fn new(tau1: u64, tau2: u64, tau3: u64) -> Result<Self> {
        if tau1 == 0 || tau1 > tau2 || tau2 > tau3 {
            return Err(Error::Config(format!(
                "size model ({tau1},{tau2},{tau3}) must be positive and nondecreasing"
            )));
        }
        Ok(SizeModel { tau1, tau2, tau3 })
    }

    /// Same size for every layer count.
    pub fn uniform(tau: u64) -> Result<Self> {
        Self::new(tau, tau, tau)
    }

    /// Size of a `layers`-deep ciphertext.
    pub fn bits(&self, layers: usize) -> u64 {
        match layers {
            1 => self.tau1,
            2 => self.tau2,
            _ => self.tau3,
        }
    }
}

impl Default for SizeModel {
    fn default() -> Self {
        SizeModel::ECIES_256
    }
}

/// Scheme family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    Mock,
    Real,
}

/// Public half of a key pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    id: u64,
    point: Option<p256::PublicKey>,
}

impl PublicKey {
    pub fn id(&self) -> u64 {
        self.id
    }
}

/// Key pair of a server.
#[derive(Clone, Debug)]
pub struct KeyPair {
    public: PublicKey,
    secret: Option<p256::SecretKey>,
    kind: SuiteKind,
    gamma: u32,
}

impl KeyPair {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn kind(&self) -> SuiteKind {
        self.kind
    }

    /// Security parameter in bits.
    pub fn gamma(&self) -> u32 {
        self.gamma
    }
}

/// Mock ciphertext: the key-id chain (innermost first) and the payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MockCiphertext {
    keys: [u64; MAX_LAYERS],
    depth: u8,
    payload: Payload,
}

/// Ciphertext with one to three layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayeredCiphertext {
    Mock {
        ct: MockCiphertext,
        sizes: SizeModel,
    },
    Real {
        bytes: Vec<u8>,
    },
}

/// Result of removing one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decrypted {
    Layer(LayeredCiphertext),
    Payload(Payload),
}

impl Decrypted {
    pub fn into_layer(self) -> Result<LayeredCiphertext> {
        match self {
            Decrypted::Layer(c) => Ok(c),
            Decrypted::Payload(_) => Err(Error::LayerUnderflow),
        }
    }

    pub fn into_payload(self) -> Result<Payload> {
        match self {
            Decrypted::Payload(p) => Ok(p),
            Decrypted::Layer(c) => Err(Error::Decode(format!("{} layers remain", c.layers()))),
        }
    }
}

impl LayeredCiphertext {
    /// Number of layers.
    pub fn layers(&self) -> usize {
        match self {
            LayeredCiphertext::Mock { ct, .. } => ct.depth as usize,
            LayeredCiphertext::Real { bytes } => (bytes.len() - PAYLOAD_LEN) / LAYER_OVERHEAD,
        }
    }

    /// Size in bits: declared for the mock suite, measured for the real suite.
    pub fn size_bits(&self) -> u64 {
        match self {
            LayeredCiphertext::Mock { ct, sizes } => sizes.bits(ct.depth as usize),
            LayeredCiphertext::Real { bytes } => 8 * bytes.len() as u64,
        }
    }

    /// Serialized form.
    pub fn encode(&self) -> Vec<u8> {
        match self {
            LayeredCiphertext::Mock { ct, sizes } => {
                let mut out = Vec::with_capacity(2 + 24 + 8 * ct.depth as usize + PAYLOAD_LEN);
                out.push(b'M');
                out.push(ct.depth);
                for t in [sizes.tau1, sizes.tau2, sizes.tau3] {
                    out.extend_from_slice(&t.to_be_bytes());
                }
                for k in &ct.keys[..ct.depth as usize] {
                    out.extend_from_slice(&k.to_be_bytes());
                }
                out.extend_from_slice(&ct.payload.to_bytes());
                out
            }
            LayeredCiphertext::Real { bytes } => {
                let mut out = Vec::with_capacity(1 + bytes.len());
                out.push(b'R');
                out.extend_from_slice(bytes);
                out
            }
        }
    }

    /// Parses the output of [`LayeredCiphertext::encode`].
    pub fn decode(buf: &[u8]) -> Result<LayeredCiphertext> {
        let (&tag, rest) = buf
            .split_first()
            .ok_or_else(|| Error::Decode("empty ciphertext".into()))?;
        match tag {
            b'M' => {
                let (&depth, rest) = rest
                    .split_first()
                    .ok_or_else(|| Error::Decode("missing depth".into()))?;
                let d = depth as usize;
                if d == 0 || d > MAX_LAYERS {
                    return Err(Error::Decode(format!("mock depth {depth}")));
                }
                if rest.len() != 24 + 8 * d + PAYLOAD_LEN {
                    return Err(Error::Decode(format!(
                        "mock ciphertext body of {} bytes",
                        rest.len()
                    )));
                }
                let word =
                    |i: usize| u64::from_be_bytes(rest[8 * i..8 * i + 8].try_into().unwrap());
                let sizes = SizeModel::new(word(0), word(1), word(2))
                    .map_err(|e| Error::Decode(e.to_string()))?;
                let mut keys = [0u64; MAX_LAYERS];
                for (i, k) in keys.iter_mut().enumerate().take(d) {
                    *k = word(3 + i);
                }
                let payload = Payload::from_bytes(&rest[24 + 8 * d..])?;
                Ok(LayeredCiphertext::Mock {
                    ct: MockCiphertext {
                        keys,
                        depth,
                        payload,
                    },
                    sizes,
                })
            }
            b'R' => {
                let extra = rest.len().checked_sub(PAYLOAD_LEN);
                match extra {
                    Some(e)
                        if e > 0 && e % LAYER_OVERHEAD == 0 && e / LAYER_OVERHEAD <= MAX_LAYERS =>
                    {
                        Ok(LayeredCiphertext::Real {
                            bytes: rest.to_vec(),
                        })
                    }
                    _ => Err(Error::Decode(format!(
                        "real ciphertext of {} bytes",
                        rest.len()
                    ))),
                }
            }
            t => Err(Error::Decode(format!("unknown ciphertext tag {t:#04x}"))),
        }
    }
}

/// Cipher suite: scheme kind, size model and security parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CipherSuite {
    pub kind: SuiteKind,
    pub sizes: SizeModel,
    pub gamma: u32,
}

impl Default for CipherSuite {
    fn default() -> Self {
        CipherSuite::mock(SizeModel::ECIES_256)
    }
}

type HmacSha256 = Hmac<Sha256>;

fn ecies_keys(shared: &[u8], eph: &[u8], len: usize) -> (Vec<u8>, [u8; 32]) {
    let hk = Hkdf::<Sha256>::new(Some(eph), shared);
    let mut okm = vec![0u8; len + 32];
    hk.expand(KDF_INFO, &mut okm)
        .expect("output length within HKDF limit");
    let mut mac_key = [0u8; 32];
    mac_key.copy_from_slice(&okm[len..]);
    okm.truncate(len);
    (okm, mac_key)
}

fn ecies_encrypt<R: RngCore + CryptoRng>(pk: &p256::PublicKey, pt: &[u8], rng: &mut R) -> Vec<u8> {
    let eph = p256::ecdh::EphemeralSecret::random(rng);
    let eph_pub = eph.public_key().to_encoded_point(false);
    let shared = eph.diffie_hellman(pk);
    let (stream, mac_key) = ecies_keys(shared.raw_secret_bytes(), eph_pub.as_bytes(), pt.len());
    let mut out = Vec::with_capacity(pt.len() + LAYER_OVERHEAD);
    out.extend_from_slice(eph_pub.as_bytes());
    out.extend(pt.iter().zip(&stream).map(|(a, b)| a ^ b));
    let mut mac = HmacSha256::new_from_slice(&mac_key).expect("any key length");
    mac.update(&out);
    out.extend_from_slice(&mac.finalize().into_bytes()[..TAG_LEN]);
    out
}

fn ecies_decrypt(sk: &p256::SecretKey, ct: &[u8]) -> Result<Vec<u8>> {
    if ct.len() < LAYER_OVERHEAD {
        return Err(Error::Decode(format!("ciphertext of {} bytes", ct.len())));
    }
    let (eph, rest) = ct.split_at(POINT_LEN);
    let (body, tag) = rest.split_at(rest.len() - TAG_LEN);
    let eph_pk = p256::PublicKey::from_sec1_bytes(eph)
        .map_err(|_| Error::Decode("invalid ephemeral point".into()))?;
    let shared = p256::ecdh::diffie_hellman(sk.to_nonzero_scalar(), eph_pk.as_affine());
    let (stream, mac_key) = ecies_keys(shared.raw_secret_bytes(), eph, body.len());
    let mut mac = HmacSha256::new_from_slice(&mac_key).expect("any key length");
    mac.update(&ct[..ct.len() - TAG_LEN]);
    mac.verify_truncated_left(tag)
        .map_err(|_| Error::WrongKey)?;
    Ok(body.iter().zip(&stream).map(|(a, b)| a ^ b).collect())
}

impl CipherSuite {
    pub fn mock(sizes: SizeModel) -> Self {
        CipherSuite {
            kind: SuiteKind::Mock,
            sizes,
            gamma: 256,
        }
    }

    /// ECIES over P-256; only `gamma = 256` is available.
    pub fn real(gamma: u32) -> Result<Self> {
        if gamma != 256 {
            return Err(Error::Unsupported(format!(
                "security parameter {gamma}; only 256 is available"
            )));
        }
        let bits = |k: usize| 8 * (PAYLOAD_LEN + k * LAYER_OVERHEAD) as u64;
        Ok(CipherSuite {
            kind: SuiteKind::Real,
            sizes: SizeModel {
                tau1: bits(1),
                tau2: bits(2),
                tau3: bits(3),
            },
            gamma,
        })
    }

    /// Size of a `layers`-deep ciphertext under this suite.
    pub fn tau(&self, layers: usize) -> u64 {
        self.sizes.bits(layers)
    }

    /// Fresh key pair.
    pub fn keygen<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Result<KeyPair> {
        match self.kind {
            SuiteKind::Mock => Ok(KeyPair {
                public: PublicKey {
                    id: rng.next_u64(),
                    point: None,
                },
                secret: None,
                kind: self.kind,
                gamma: self.gamma,
            }),
            SuiteKind::Real => {
                if self.gamma != 256 {
                    return Err(Error::Unsupported(format!(
                        "security parameter {}",
                        self.gamma
                    )));
                }
                let sk = p256::SecretKey::random(rng);
                let pk = sk.public_key();
                let enc = pk.to_encoded_point(true);
                let id = u64::from_be_bytes(enc.as_bytes()[1..9].try_into().unwrap());
                Ok(KeyPair {
                    public: PublicKey {
                        id,
                        point: Some(pk),
                    },
                    secret: Some(sk),
                    kind: self.kind,
                    gamma: self.gamma,
                })
            }
        }
    }

    /// Encrypts `payload` under `keys`, innermost first, so the last key is outermost.
    pub fn encrypt_layers<R: RngCore + CryptoRng>(
        &self,
        payload: Payload,
        keys: &[&PublicKey],
        rng: &mut R,
    ) -> Result<LayeredCiphertext> {
        if keys.is_empty() {
            return Err(Error::LayerUnderflow);
        }
        if keys.len() > MAX_LAYERS {
            return Err(Error::Unsupported(format!("{} layers", keys.len())));
        }
        match self.kind {
            SuiteKind::Mock => {
                let mut ids = [0u64; MAX_LAYERS];
                for (slot, k) in ids.iter_mut().zip(keys) {
                    *slot = k.id;
                }
                Ok(LayeredCiphertext::Mock {
                    ct: MockCiphertext {
                        keys: ids,
                        depth: keys.len() as u8,
                        payload,
                    },
                    sizes: self.sizes,
                })
            }
            SuiteKind::Real => {
                let mut bytes = payload.to_bytes().to_vec();
                for k in keys {
                    let pk = k
                        .point
                        .as_ref()
                        .ok_or_else(|| Error::Unsupported("mock key with real suite".into()))?;
                    bytes = ecies_encrypt(pk, &bytes, rng);
                }
                Ok(LayeredCiphertext::Real { bytes })
            }
        }
    }

    /// Adds one outer layer to an existing ciphertext.
    pub fn wrap<R: RngCore + CryptoRng>(
        &self,
        ct: &LayeredCiphertext,
        key: &PublicKey,
        rng: &mut R,
    ) -> Result<LayeredCiphertext> {
        if ct.layers() >= MAX_LAYERS {
            return Err(Error::Unsupported(format!("{} layers", ct.layers() + 1)));
        }
        match ct {
            LayeredCiphertext::Mock { ct, sizes } => {
                let mut c = *ct;
                c.keys[c.depth as usize] = key.id;
                c.depth += 1;
                Ok(LayeredCiphertext::Mock {
                    ct: c,
                    sizes: *sizes,
                })
            }
            LayeredCiphertext::Real { bytes } => {
                let pk = key
                    .point
                    .as_ref()
                    .ok_or_else(|| Error::Unsupported("mock key with real suite".into()))?;
                Ok(LayeredCiphertext::Real {
                    bytes: ecies_encrypt(pk, bytes, rng),
                })
            }
        }
    }

    /// Removes the outermost layer with `key`.
    pub fn decrypt_layer(&self, ct: &LayeredCiphertext, key: &KeyPair) -> Result<Decrypted> {
        match ct {
            LayeredCiphertext::Mock { ct, sizes } => {
                if ct.depth == 0 {
                    return Err(Error::LayerUnderflow);
                }
                let top = ct.depth as usize - 1;
                if ct.keys[top] != key.public.id || key.kind != SuiteKind::Mock {
                    return Err(Error::WrongKey);
                }
                if top == 0 {
                    return Ok(Decrypted::Payload(ct.payload));
                }
                let mut c = *ct;
                c.keys[top] = 0;
                c.depth -= 1;
                Ok(Decrypted::Layer(LayeredCiphertext::Mock {
                    ct: c,
                    sizes: *sizes,
                }))
            }
            LayeredCiphertext::Real { bytes } => {
                let sk = key.secret.as_ref().ok_or(Error::WrongKey)?;
                let inner = ecies_decrypt(sk, bytes)?;
                if inner.len() == PAYLOAD_LEN {
                    Ok(Decrypted::Payload(Payload::from_bytes(&inner)?))
                } else {
                    Ok(Decrypted::Layer(LayeredCiphertext::Real { bytes: inner }))
                }
            }
        }
    }
}

/// Size in bits of `ct`.
pub fn ciphertext_size_bits(ct: &LayeredCiphertext) -> u64 {
    ct.size_bits()
}
