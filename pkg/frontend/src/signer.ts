// Ed25519 signing for the login challenge. The private seed stays with the
// user: it is pasted at login and never sent to the gateway.

const PKCS8_ED25519_PREFIX = '302e020100300506032b657004220420';

export function hexToBytes(hex: string): Uint8Array {
  const clean = hex.trim();
  if (clean.length % 2 !== 0 || /[^0-9a-fA-F]/.test(clean)) {
    throw new Error('invalid hex string');
  }
  const out = new Uint8Array(clean.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(clean.slice(i * 2, i * 2 + 2), 16);
  }
  return out;
}

export function bytesToHex(bytes: Uint8Array): string {
  return Array.from(bytes, (b) => b.toString(16).padStart(2, '0')).join('');
}

export function concatBytes(a: Uint8Array, b: Uint8Array): Uint8Array {
  const out = new Uint8Array(a.length + b.length);
  out.set(a, 0);
  out.set(b, a.length);
  return out;
}

async function signWithWebCrypto(seed: Uint8Array, message: Uint8Array): Promise<Uint8Array> {
  const pkcs8 = concatBytes(hexToBytes(PKCS8_ED25519_PREFIX), seed);
  const key = await crypto.subtle.importKey('pkcs8', pkcs8.buffer as ArrayBuffer, { name: 'Ed25519' }, false, [
    'sign',
  ]);
  const sig = await crypto.subtle.sign({ name: 'Ed25519' }, key, message.buffer as ArrayBuffer);
  return new Uint8Array(sig);
}

async function signWithNodeCrypto(seed: Uint8Array, message: Uint8Array): Promise<Uint8Array> {
  const nodeCrypto = await import('node:crypto');
  const pkcs8 = concatBytes(hexToBytes(PKCS8_ED25519_PREFIX), seed);
  const key = nodeCrypto.createPrivateKey({
    key: Buffer.from(pkcs8),
    format: 'der',
    type: 'pkcs8',
  });
  return new Uint8Array(nodeCrypto.sign(null, Buffer.from(message), key));
}

/** Sign a message with a raw 32-byte Ed25519 seed (hex). */
export async function signWithSeed(seedHex: string, message: Uint8Array): Promise<Uint8Array> {
  const seed = hexToBytes(seedHex);
  if (seed.length !== 32) {
    throw new Error('seed must be 32 bytes of hex');
  }
  try {
    if (typeof crypto !== 'undefined' && crypto.subtle) {
      return await signWithWebCrypto(seed, message);
    }
  } catch {
    // WebCrypto without Ed25519 support: fall through to node.
  }
  return signWithNodeCrypto(seed, message);
}

export const LOGIN_NONCE_PREFIX = new TextEncoder().encode('radchain-login:');
