/** Saliency-blob ROI proposer standing in for an open-set segmenter.

Scores regions by how strongly they deviate from the border color; the
text prompt is accepted for interface parity but carries no grounding
here (no open-vocabulary checkpoint is available offline).  Boxes below
the score threshold (default 0.25) are dropped.
*/

import { Box, RgbImage } from './image'

export interface Proposal {
  box: Box
  score: number
}

export const DEFAULT_SCORE_THRESHOLD = 0.25

function saliencyMap(image: RgbImage): Float64Array {
  const { width, height, data } = image
  let br = 0
  let bg = 0
  let bb = 0
  let count = 0
  const addPixel = (x: number, y: number) => {
    const i = (y * width + x) * 3
    br += data[i]
    bg += data[i + 1]
    bb += data[i + 2]
    count++
  }
  for (let x = 0; x < width; x++) {
    addPixel(x, 0)
    addPixel(x, height - 1)
  }
  for (let y = 1; y < height - 1; y++) {
    addPixel(0, y)
    addPixel(width - 1, y)
  }
  br /= count
  bg /= count
  bb /= count
  const sal = new Float64Array(width * height)
  for (let p = 0; p < width * height; p++) {
    const i = p * 3
    sal[p] =
      (Math.abs(data[i] - br) + Math.abs(data[i + 1] - bg) + Math.abs(data[i + 2] - bb)) / 765
  }
  return sal
}

export function segment(
  image: RgbImage,
  prompt: string,
  scoreThreshold: number = DEFAULT_SCORE_THRESHOLD,
  maxProposals = 3,
): Proposal[] {
  void prompt // accepted for wire compatibility; see module docstring
  const { width, height } = image
  const sal = saliencyMap(image)
  let mean = 0
  for (const v of sal) mean += v
  mean /= sal.length
  let varAcc = 0
  for (const v of sal) varAcc += (v - mean) * (v - mean)
  const std = Math.sqrt(varAcc / sal.length)
  const cut = mean + Math.max(std, 0.02)

  const labels = new Int32Array(width * height).fill(-1)
  const proposals: Proposal[] = []
  const stack: number[] = []
  let component = 0
  for (let start = 0; start < sal.length; start++) {
    if (sal[start] <= cut || labels[start] !== -1) continue
    let minX = width
    let minY = height
    let maxX = -1
    let maxY = -1
    let area = 0
    let mass = 0
    stack.push(start)
    labels[start] = component
    while (stack.length) {
      const p = stack.pop() as number
      const x = p % width
      const y = (p - x) / width
      area++
      mass += sal[p]
      if (x < minX) minX = x
      if (x > maxX) maxX = x
      if (y < minY) minY = y
      if (y > maxY) maxY = y
      const neighbors = [
        x > 0 ? p - 1 : -1,
        x < width - 1 ? p + 1 : -1,
        y > 0 ? p - width : -1,
        y < height - 1 ? p + width : -1,
      ]
      for (const q of neighbors) {
        if (q >= 0 && labels[q] === -1 && sal[q] > cut) {
          labels[q] = component
          stack.push(q)
        }
      }
    }
    component++
    if (area < 0.002 * width * height) continue
    const score = Math.min(1, mass / area + 0.1 * Math.min(1, area / (0.05 * width * height)))
    const box: Box = { x1: minX, y1: minY, x2: Math.min(maxX + 1, width), y2: Math.min(maxY + 1, height) }
    if (box.x2 - box.x1 >= 2 && box.y2 - box.y1 >= 2 && score >= scoreThreshold) {
      proposals.push({ box, score })
    }
  }
  proposals.sort((a, b) => b.score - a.score || a.box.x1 - b.box.x1 || a.box.y1 - b.box.y1)
  return proposals.slice(0, maxProposals)
}
