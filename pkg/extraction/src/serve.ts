/** Live wire-protocol server over stdio (newline-delimited JSON).

Handshake: {"op":"hello","proto":1} -> capability list.  Requests name
images by path; feature replies point at freshly written TOTF files.
Protocol errors become {"op":"error"} replies; the stream never dies.
*/

import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import * as readline from 'readline'

import { readPng } from './image'
import { Classifier } from './model'
import { DEFAULT_SCORE_THRESHOLD, segment } from './segmenter'
import { writeTotf } from './totf'

export const PROTO_VERSION = 1

export interface ServeOptions {
  scoreThreshold?: number
  tensorDir?: string
}

export function handleRequest(
  model: Classifier,
  req: unknown,
  options: ServeOptions & { tensorDir: string; counter: { n: number } },
): Record<string, unknown> {
  if (typeof req !== 'object' || req === null) {
    return { op: 'error', id: null, message: 'request is not an object' }
  }
  const message = req as Record<string, unknown>
  const op = message.op
  const id = 'id' in message ? message.id : null
  try {
    if (op === 'hello') {
      if (message.proto !== PROTO_VERSION) {
        return { op: 'error', id, message: `unsupported proto ${message.proto}` }
      }
      return { op: 'hello', proto: PROTO_VERSION, capabilities: ['predict', 'features', 'segment'] }
    }
    if (op === 'predict') {
      const ranked = model.predict(readPng(String(message.image)))
      return { op: 'result', id, classes: ranked.classes, scores: ranked.scores }
    }
    if (op === 'features') {
      const { features } = model.predictWithFeatures(readPng(String(message.image)))
      const tensorPath = path.join(options.tensorDir, `tensor_${options.counter.n++}.totf`)
      writeTotf(features, tensorPath)
      return { op: 'result', id, tensor: tensorPath }
    }
    if (op === 'segment') {
      const proposals = segment(
        readPng(String(message.image)),
        String(message.prompt ?? ''),
        options.scoreThreshold ?? DEFAULT_SCORE_THRESHOLD,
      )
      return {
        op: 'result',
        id,
        boxes: proposals.map((p) => [p.box.x1, p.box.y1, p.box.x2, p.box.y2]),
        scores: proposals.map((p) => p.score),
      }
    }
    return { op: 'error', id, message: `unsupported op ${String(op)}` }
  } catch (err) {
    return { op: 'error', id, message: err instanceof Error ? err.message : String(err) }
  }
}

export function serve(model: Classifier, options: ServeOptions = {}): Promise<void> {
  const tensorDir =
    options.tensorDir ?? fs.mkdtempSync(path.join(os.tmpdir(), 'tot-serve-'))
  fs.mkdirSync(tensorDir, { recursive: true })
  const counter = { n: 0 }
  const rl = readline.createInterface({ input: process.stdin, terminal: false })
  return new Promise((resolve) => {
    rl.on('line', (line) => {
      if (!line.trim()) return
      let req: unknown
      try {
        req = JSON.parse(line)
      } catch {
        process.stdout.write(JSON.stringify({ op: 'error', id: null, message: 'bad JSON' }) + '\n')
        return
      }
      const reply = handleRequest(model, req, { ...options, tensorDir, counter })
      process.stdout.write(JSON.stringify(reply) + '\n')
    })
    rl.on('close', () => resolve())
  })
}
