/** TOTF feature tensor files: magic, u16 version, u32 n/H/W, f32 payload (LE). */

import * as fs from 'fs'

const MAGIC = 'TOTF'
const VERSION = 1
const HEADER_BYTES = 4 + 2 + 4 * 3

export interface FeatureTensor {
  channels: number
  height: number
  width: number
  /** channel-major then row-major */
  values: Float32Array
}

export function writeTotf(tensor: FeatureTensor, path: string): void {
  const { channels, height, width, values } = tensor
  if (values.length !== channels * height * width) {
    throw new Error(`tensor payload ${values.length} != ${channels}*${height}*${width}`)
  }
  for (const v of values) {
    if (!Number.isFinite(v)) throw new Error('refusing to write non-finite tensor')
  }
  const buf = Buffer.alloc(HEADER_BYTES + values.length * 4)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt16LE(VERSION, 4)
  buf.writeUInt32LE(channels, 6)
  buf.writeUInt32LE(height, 10)
  buf.writeUInt32LE(width, 14)
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], HEADER_BYTES + i * 4)
  }
  fs.writeFileSync(path, buf)
}

export function readTotf(path: string): FeatureTensor {
  const buf = fs.readFileSync(path)
  if (buf.length < HEADER_BYTES || buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error(`${path}: not a TOTF file`)
  }
  const version = buf.readUInt16LE(4)
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version}`)
  const channels = buf.readUInt32LE(6)
  const height = buf.readUInt32LE(10)
  const width = buf.readUInt32LE(14)
  const count = channels * height * width
  if (buf.length !== HEADER_BYTES + count * 4) {
    throw new Error(`${path}: payload size mismatch`)
  }
  const values = new Float32Array(count)
  for (let i = 0; i < count; i++) values[i] = buf.readFloatLE(HEADER_BYTES + i * 4)
  return { channels, height, width, values }
}
