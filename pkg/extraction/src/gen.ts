/** Deterministic smoke-set image generator: one colored blob per class. */

import * as fs from 'fs'
import * as path from 'path'

import { RgbImage, writePng } from './image'
import { mulberry32 } from './model'

function classColor(label: number): [number, number, number] {
  const hue = (label * 0.61803398875) % 1
  const h6 = hue * 6
  const x = Math.round(255 * (1 - Math.abs((h6 % 2) - 1)))
  const table: Array<[number, number, number]> = [
    [255, x, 0], [x, 255, 0], [0, 255, x], [0, x, 255], [x, 0, 255], [255, 0, x],
  ]
  return table[Math.floor(h6) % 6]
}

export function blobImage(label: number, seed: number, size = 96): RgbImage {
  const rand = mulberry32(seed)
  const data = new Uint8Array(size * size * 3)
  for (let i = 0; i < data.length; i++) {
    data[i] = 110 + Math.floor(rand() * 24)
  }
  const [r, g, b] = classColor(label)
  const cx = size * (0.35 + 0.3 * rand())
  const cy = size * (0.35 + 0.3 * rand())
  const radius = size * (0.16 + 0.08 * rand())
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const d = Math.hypot(x - cx, y - cy)
      if (d <= radius) {
        const i = (y * size + x) * 3
        data[i] = r
        data[i + 1] = g
        data[i + 2] = b
      }
    }
  }
  return { width: size, height: size, data }
}

export function makeSmokeSet(
  outDir: string,
  classes: number,
  perClass: number,
  seed: number,
  size = 96,
): string[] {
  const written: string[] = []
  for (let label = 0; label < classes; label++) {
    const dir = path.join(outDir, String(label))
    fs.mkdirSync(dir, { recursive: true })
    for (let i = 0; i < perClass; i++) {
      const file = path.join(dir, `img${i}.png`)
      writePng(blobImage(label, seed * 10_007 + label * 101 + i, size), file)
      written.push(file)
    }
  }
  return written
}

export function makeTaxonomyFile(classes: number, finesPerSuper: number, outPath: string): void {
  const lines: string[] = []
  for (let fine = 0; fine < classes; fine++) {
    const superId = Math.floor(fine / finesPerSuper)
    lines.push(`${fine}\tfine_${fine}\t${superId}\tsuper_${superId}`)
  }
  fs.writeFileSync(outPath, lines.join('\n') + '\n')
}
