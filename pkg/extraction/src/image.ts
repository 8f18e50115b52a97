/** 8-bit RGB images plus the geometry used on ROI crops. */

import * as fs from 'fs'
import { PNG } from 'pngjs'

export interface RgbImage {
  width: number
  height: number
  /** row-major RGB, 3 bytes per pixel */
  data: Uint8Array
}

export interface Box {
  x1: number
  y1: number
  x2: number
  y2: number
}

export function readPng(path: string): RgbImage {
  const png = PNG.sync.read(fs.readFileSync(path))
  // pngjs normalizes to 8-bit RGBA; refuse sources it had to up-convert
  const meta = png as unknown as { depth?: number; color?: boolean }
  if (meta.depth !== undefined && meta.depth > 8) {
    throw new Error(`${path}: expected 8-bit PNG, got depth ${meta.depth}`)
  }
  const data = new Uint8Array(png.width * png.height * 3)
  for (let i = 0, j = 0; i < png.data.length; i += 4, j += 3) {
    data[j] = png.data[i]
    data[j + 1] = png.data[i + 1]
    data[j + 2] = png.data[i + 2]
  }
  return { width: png.width, height: png.height, data }
}

export function writePng(image: RgbImage, path: string): void {
  const png = new PNG({ width: image.width, height: image.height })
  for (let i = 0, j = 0; j < image.data.length; i += 4, j += 3) {
    png.data[i] = image.data[j]
    png.data[i + 1] = image.data[j + 1]
    png.data[i + 2] = image.data[j + 2]
    png.data[i + 3] = 255
  }
  // colorType 2 = true-color RGB without alpha, as the manifest contract requires
  fs.writeFileSync(path, PNG.sync.write(png, { colorType: 2 }))
}

function clampInt(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi)
}

/** The ROI box and its delta/2*delta expansions, clamped to the image. */
export function expandRoi(roi: Box, delta: number, width: number, height: number): [Box, Box, Box] {
  const grow = (d: number): Box => ({
    x1: clampInt(roi.x1 - d, 0, width),
    y1: clampInt(roi.y1 - d, 0, height),
    x2: clampInt(roi.x2 + d, 0, width),
    y2: clampInt(roi.y2 + d, 0, height),
  })
  return [roi, grow(delta), grow(2 * delta)]
}

export function crop(image: RgbImage, box: Box): RgbImage {
  const w = box.x2 - box.x1
  const h = box.y2 - box.y1
  if (w < 1 || h < 1) throw new Error(`degenerate box ${JSON.stringify(box)}`)
  const data = new Uint8Array(w * h * 3)
  for (let y = 0; y < h; y++) {
    const src = ((y + box.y1) * image.width + box.x1) * 3
    data.set(image.data.subarray(src, src + w * 3), y * w * 3)
  }
  return { width: w, height: h, data }
}

/** Bilinear resize with half-pixel centers, accumulation in doubles. */
export function resizeBilinear(image: RgbImage, outW: number, outH: number): RgbImage {
  if (image.width === outW && image.height === outH) {
    return { width: outW, height: outH, data: image.data.slice() }
  }
  const out = new Uint8Array(outW * outH * 3)
  const scaleX = image.width / outW
  const scaleY = image.height / outH
  for (let y = 0; y < outH; y++) {
    let sy = (y + 0.5) * scaleY - 0.5
    sy = Math.min(Math.max(sy, 0), image.height - 1)
    const y0 = Math.floor(sy)
    const y1 = Math.min(y0 + 1, image.height - 1)
    const fy = sy - y0
    for (let x = 0; x < outW; x++) {
      let sx = (x + 0.5) * scaleX - 0.5
      sx = Math.min(Math.max(sx, 0), image.width - 1)
      const x0 = Math.floor(sx)
      const x1 = Math.min(x0 + 1, image.width - 1)
      const fx = sx - x0
      for (let c = 0; c < 3; c++) {
        const p00 = image.data[(y0 * image.width + x0) * 3 + c]
        const p01 = image.data[(y0 * image.width + x1) * 3 + c]
        const p10 = image.data[(y1 * image.width + x0) * 3 + c]
        const p11 = image.data[(y1 * image.width + x1) * 3 + c]
        const top = p00 + fx * (p01 - p00)
        const bot = p10 + fx * (p11 - p10)
        out[(y * outW + x) * 3 + c] = clampInt(Math.round(top + fy * (bot - top)), 0, 255)
      }
    }
  }
  return { width: outW, height: outH, data: out }
}

function gaussianTaps(sigma: number): Float64Array {
  const radius = Math.ceil(3 * sigma)
  const taps = new Float64Array(2 * radius + 1)
  let sum = 0
  for (let i = -radius; i <= radius; i++) {
    const w = Math.exp(-(i * i) / (2 * sigma * sigma))
    taps[i + radius] = w
    sum += w
  }
  for (let i = 0; i < taps.length; i++) taps[i] /= sum
  return taps
}

/** Separable Gaussian blur, clamp-to-edge, single rounding at the end. */
export function gaussianBlur(image: RgbImage, sigma: number): RgbImage {
  if (sigma <= 0) return { ...image, data: image.data.slice() }
  const taps = gaussianTaps(sigma)
  const radius = (taps.length - 1) / 2
  const { width, height } = image
  const horiz = new Float64Array(width * height * 3)
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < 3; c++) {
        let acc = 0
        for (let t = 0; t < taps.length; t++) {
          const xs = clampInt(x + t - radius, 0, width - 1)
          acc += taps[t] * image.data[(y * width + xs) * 3 + c]
        }
        horiz[(y * width + x) * 3 + c] = acc
      }
    }
  }
  const out = new Uint8Array(width * height * 3)
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < 3; c++) {
        let acc = 0
        for (let t = 0; t < taps.length; t++) {
          const ys = clampInt(y + t - radius, 0, height - 1)
          acc += taps[t] * horiz[(ys * width + x) * 3 + c]
        }
        out[(y * width + x) * 3 + c] = clampInt(Math.round(acc), 0, 255)
      }
    }
  }
  return { width, height, data: out }
}
