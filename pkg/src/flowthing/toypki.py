"""Toy public-key arithmetic for the PKI workflow models.

Nothing here is secure. The hash is the sum of ASCII codes, and the
"key pair" is an additive inverse pair ``(d, e)`` modulo ``M`` with
``d + e == M``, so encrypting with one key and decrypting with the other
is an exact round trip.

The second half of the module wraps the same arithmetic as named
simulation handlers (``HANDLERS``) that read and write token attributes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Optional

DEFAULT_MODULUS = 1000003


class NonAsciiError(ValueError):
    def __init__(self, index: int, char: str):
        super().__init__(f"non-ASCII character {char!r} at index {index}")
        self.index = index


class Verdict(str, enum.Enum):
    AUTHENTIC = "authentic"
    ALTERED = "altered"
    WRONG_KEY = "wrong_key"
    EXPIRED = "expired"

    def __str__(self):
        return self.value


def ascii_hash(message: str) -> int:
    total = 0
    for i, ch in enumerate(message):
        code = ord(ch)
        if code > 127:
            raise NonAsciiError(i, ch)
        total += code
    return total


def hash_terms(message: str) -> list[int]:
    """The addition chain behind :func:`ascii_hash`, one term per character."""
    ascii_hash(message)
    return [ord(c) for c in message]


@dataclass(frozen=True)
class ToyKeyPair:
    private: int
    public: int
    modulus: int = DEFAULT_MODULUS

    def __post_init__(self):
        M = self.modulus
        if M < 2 or not (1 <= self.private < M and 1 <= self.public < M):
            raise ValueError("key out of range")
        if (self.private + self.public) % M:
            raise ValueError("private and public keys are not an inverse pair")

    @property
    def public_key(self) -> tuple[int, int]:
        return self.public, self.modulus


def keygen(seed: int, modulus: int = DEFAULT_MODULUS) -> ToyKeyPair:
    d = seed % (modulus - 1) + 1
    return ToyKeyPair(d, modulus - d, modulus)


def _check_range(h: int, M: int):
    if not 0 <= h < M:
        raise ValueError(f"value {h} outside [0, {M})")


def toy_encrypt(h: int, key: int, M: int = DEFAULT_MODULUS) -> int:
    _check_range(h, M)
    return (h + key) % M


def toy_decrypt(c: int, key: int, M: int = DEFAULT_MODULUS) -> int:
    _check_range(c, M)
    return (c + key) % M


@dataclass(frozen=True)
class SignedMessage:
    body: str
    appended_cipher: int


def sign_message(body: str, kp: ToyKeyPair) -> SignedMessage:
    return SignedMessage(body, toy_encrypt(ascii_hash(body), kp.private, kp.modulus))


def _public(key) -> tuple[int, int]:
    # a bare exponent means the default modulus
    return (key, DEFAULT_MODULUS) if isinstance(key, int) else tuple(key)


def _decrypts_to(cipher: int, public, expected: int) -> bool:
    e, M = _public(public)
    if not 0 <= cipher < M:
        return False
    return toy_decrypt(cipher, e, M) == expected


def verify_message(sm: SignedMessage, public, actual=None) -> Verdict:
    """Check a signed message against the signer's public key.

    Keys are ``(e, M)`` pairs or a bare ``e`` under the default modulus.

    With one key the result is authentic or altered. Passing the key that
    actually signed as *actual* lets a failure against *public* be told
    apart as wrong_key when the message verifies under *actual*.
    """
    h = ascii_hash(sm.body)
    if _decrypts_to(sm.appended_cipher, public, h):
        return Verdict.AUTHENTIC
    if actual is not None and _decrypts_to(sm.appended_cipher, actual, h):
        return Verdict.WRONG_KEY
    return Verdict.ALTERED


@dataclass(frozen=True)
class ToyCertificate:
    subject_identity: str
    public_key: tuple[int, int]
    validity: tuple[int, int]
    issuer_name: str
    serial: int
    ca_signature: int

    def body(self) -> str:
        return canonical_body(self.subject_identity, self.public_key, self.validity,
                              self.issuer_name, self.serial)


def canonical_body(subject, public_key, validity, issuer, serial) -> str:
    e, M = public_key
    t0, t1 = validity
    return "|".join(str(x) for x in (subject, e, M, t0, t1, issuer, serial))


def issue_certificate(subject: str, subject_public: tuple[int, int], validity: tuple[int, int],
                      ca_name: str, serial: int, ca: ToyKeyPair) -> ToyCertificate:
    t0, t1 = validity
    if t0 > t1:
        raise ValueError(f"validity starts after it ends ({t0} > {t1})")
    body = canonical_body(subject, subject_public, validity, ca_name, serial)
    sig = toy_encrypt(ascii_hash(body), ca.private, ca.modulus)
    return ToyCertificate(subject, tuple(subject_public), (t0, t1), ca_name, serial, sig)


def verify_certificate(cert: ToyCertificate, ca_public: tuple[int, int], now: int) -> Verdict:
    t0, t1 = cert.validity
    if not t0 <= now <= t1:
        return Verdict.EXPIRED
    try:
        h = ascii_hash(cert.body())
    except NonAsciiError:
        return Verdict.ALTERED
    if _decrypts_to(cert.ca_signature, ca_public, h):
        return Verdict.AUTHENTIC
    return Verdict.ALTERED


@dataclass(frozen=True)
class SignedDocument:
    encrypted_document: tuple[int, ...]
    signature_cipher: int
    certificate: ToyCertificate
    signer_signature_image_hash: int = 0


def encrypt_text(doc: str, key: int, M: int = DEFAULT_MODULUS) -> tuple[int, ...]:
    ascii_hash(doc)
    return tuple((ord(c) + key) % M for c in doc)


def sign_document(doc: str, cert: ToyCertificate, signer: ToyKeyPair,
                  signature_image_hash: int = 0) -> SignedDocument:
    h = ascii_hash(doc)
    return SignedDocument(
        encrypt_text(doc, signer.private, signer.modulus),
        toy_encrypt(h, signer.private, signer.modulus),
        cert,
        signature_image_hash,
    )


def verify_document(sd: SignedDocument, now: int, ca_public: tuple[int, int]) -> Verdict:
    """Separate the certificate, check it, then compare the two hashes.

    One hash comes from the decrypted document, the other from the
    decrypted signature. Both decryptions use the certificate's public key.
    A decrypted code outside ASCII means the document cannot be rebuilt
    and counts as altered.
    """
    cert_verdict = verify_certificate(sd.certificate, ca_public, now)
    if cert_verdict is not Verdict.AUTHENTIC:
        return cert_verdict
    e, M = sd.certificate.public_key
    doc_hash = 0
    for c in sd.encrypted_document:
        if not 0 <= c < M:
            return Verdict.ALTERED
        code = toy_decrypt(c, e, M)
        if code > 127:
            return Verdict.ALTERED
        doc_hash += code
    if not _decrypts_to(sd.signature_cipher, (e, M), doc_hash):
        return Verdict.ALTERED
    return Verdict.AUTHENTIC


def tamper_message(sm: SignedMessage, body: str) -> SignedMessage:
    return replace(sm, body=body)


# -- attribute encodings ------------------------------------------------------

def format_ints(values) -> str:
    return " ".join(str(v) for v in values)


def parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split()) if text.strip() else ()


CERT_KEYS = ("cert_subject", "cert_e", "cert_M", "cert_t0", "cert_t1",
             "cert_issuer", "cert_serial", "cert_sig")


def certificate_attrs(cert: ToyCertificate) -> dict:
    e, M = cert.public_key
    t0, t1 = cert.validity
    return dict(zip(CERT_KEYS, (cert.subject_identity, e, M, t0, t1,
                                cert.issuer_name, cert.serial, cert.ca_signature)))


def certificate_from_attrs(attrs: dict) -> ToyCertificate:
    return ToyCertificate(
        str(attrs["cert_subject"]),
        (int(attrs["cert_e"]), int(attrs["cert_M"])),
        (int(attrs["cert_t0"]), int(attrs["cert_t1"])),
        str(attrs["cert_issuer"]),
        int(attrs["cert_serial"]),
        int(attrs["cert_sig"]),
    )


def document_attrs(sd: SignedDocument) -> dict:
    """Token attributes carrying a signed document bundle."""
    attrs = {"encdoc": format_ints(sd.encrypted_document), "sig": sd.signature_cipher,
             "sigimg": sd.signer_signature_image_hash}
    attrs.update(certificate_attrs(sd.certificate))
    return attrs


def document_from_attrs(attrs: dict) -> SignedDocument:
    return SignedDocument(parse_ints(str(attrs["encdoc"])), int(attrs["sig"]),
                          certificate_from_attrs(attrs), int(attrs.get("sigimg", 0)))


# -- simulation handlers ------------------------------------------------------
#
# A handler gets the token attribute dict (mutated in place), its argument
# keys from the scenario binding, and the run's verdict dict. It returns
# nothing; problems raise HandlerError.

class HandlerError(ValueError):
    pass


def _get(attrs, key):
    try:
        return attrs[key]
    except KeyError:
        raise HandlerError(f"token has no attribute {key!r}") from None


def _int(attrs, key) -> int:
    v = _get(attrs, key)
    if isinstance(v, int):
        return v
    try:
        return int(v)
    except ValueError:
        raise HandlerError(f"attribute {key!r} is not an integer: {v!r}") from None


def _arity(args, lo, hi, name):
    if not lo <= len(args) <= hi:
        want = str(lo) if lo == hi else f"{lo}-{hi}"
        raise HandlerError(f"{name} takes {want} argument keys, got {len(args)}")


def _modulus(attrs, args, i) -> int:
    if len(args) > i:
        return _int(attrs, args[i])
    return _int(attrs, "M") if "M" in attrs else DEFAULT_MODULUS


def h_ascii_hash(attrs, args, verdicts):
    """ascii-hash(src, dst): dst = sum of ASCII codes of src, or -1 if src is not ASCII."""
    _arity(args, 2, 2, "ascii-hash")
    value = _get(attrs, args[0])
    try:
        attrs[args[1]] = ascii_hash(str(value))
    except NonAsciiError:
        attrs[args[1]] = -1


def _crypt(attrs, args, name, text_out):
    _arity(args, 3, 4, name)
    value = _get(attrs, args[0])
    key = _int(attrs, args[1])
    M = _modulus(attrs, args, 3)
    if isinstance(value, int):
        if not 0 <= value < M:
            raise HandlerError(f"{name}: {args[0]}={value} outside [0, {M})")
        attrs[args[2]] = (value + key) % M
    else:
        attrs[args[2]] = text_out(str(value), key, M)


def _encrypt_text(text, key, M):
    try:
        return format_ints(encrypt_text(text, key, M))
    except NonAsciiError as exc:
        raise HandlerError(f"toy-encrypt: {exc}") from None


def _decrypt_text(text, key, M):
    try:
        cipher = parse_ints(text)
    except ValueError:
        raise HandlerError(f"toy-decrypt: not a cipher sequence: {text[:20]!r}") from None
    if any(not 0 <= c < M for c in cipher):
        raise HandlerError("toy-decrypt: cipher element out of range")
    return "".join(chr((c + key) % M) for c in cipher)


def h_toy_encrypt(attrs, args, verdicts):
    """toy-encrypt(src, key, dst[, modulus]).

    Integers are shifted by the key. Text is encrypted per character into
    a space-separated cipher sequence.
    """
    _crypt(attrs, args, "toy-encrypt", _encrypt_text)


def h_toy_decrypt(attrs, args, verdicts):
    """toy-decrypt(src, key, dst[, modulus]); a cipher sequence decrypts back to text."""
    _crypt(attrs, args, "toy-decrypt", _decrypt_text)


def h_compare_eq(attrs, args, verdicts):
    """compare-eq(a, b[, out]): out = "true"/"false"; also sets verdict *out* (default "match")."""
    _arity(args, 2, 3, "compare-eq")
    out = args[2] if len(args) == 3 else "match"
    result = "true" if _get(attrs, args[0]) == _get(attrs, args[1]) else "false"
    attrs[out] = result
    verdicts[out] = result


def h_split(attrs, args, verdicts):
    """split(k1, ..., kn): keep only the listed attributes, dropping the rest of the bundle."""
    if not args:
        raise HandlerError("split needs at least one key")
    kept = {k: _get(attrs, k) for k in args}
    attrs.clear()
    attrs.update(kept)


def h_const(attrs, args, verdicts):
    """const(key, value): write a literal; digits become integers."""
    _arity(args, 2, 2, "const")
    key, raw = args
    attrs[key] = int(raw) if raw.lstrip("-").isdigit() else raw


# combine is a join, so the simulator drives it; this only checks readiness
def combine_ready(attrs, args) -> bool:
    if not args:
        raise HandlerError("combine needs at least one key")
    return all(k in attrs for k in args)


Handler = Callable[[dict, tuple, dict], None]

HANDLERS: dict[str, Optional[Handler]] = {
    "ascii-hash": h_ascii_hash,
    "toy-encrypt": h_toy_encrypt,
    "toy-decrypt": h_toy_decrypt,
    "combine": None,
    "split": h_split,
    "compare-eq": h_compare_eq,
    "const": h_const,
}
