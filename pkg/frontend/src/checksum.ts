/** FNV-1a checksum over the exact response text.
 *
 * The UI never recomputes statistics; every chart stores the checksum of the
 * service payload it renders, so tests can assert the displayed numbers
 * trace byte-for-byte to a service response.
 */

export function fnv1a(text: string): string {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    // 32-bit FNV prime multiplication via shifts to stay in integer range.
    hash = (hash + ((hash << 1) + (hash << 4) + (hash << 7) + (hash << 8) + (hash << 24))) >>> 0;
  }
  return hash.toString(16).padStart(8, "0");
}
