/** Background keying: make pixels near the known background color transparent.
 *
 * The server renders uncovered pixels in one solid color; zeroing their alpha
 * on the client lets whatever sits behind the canvas show through, the 2D
 * counterpart of a see-through display treating black as transparent.
 */

export function applyBackgroundKey(
  rgba: Uint8ClampedArray,
  key: [number, number, number],
  tolerance = 4,
): void {
  for (let i = 0; i < rgba.length; i += 4) {
    if (
      Math.abs(rgba[i] - key[0]) <= tolerance &&
      Math.abs(rgba[i + 1] - key[1]) <= tolerance &&
      Math.abs(rgba[i + 2] - key[2]) <= tolerance
    ) {
      rgba[i + 3] = 0;
    }
  }
}
