#!/usr/bin/env node
/** Extraction backend CLI: make-model, make-images, extract, serve. */

import * as fs from 'fs'
import * as path from 'path'

import { discoverInputs, extract, EXTRACT_DEFAULTS } from './extract'
import { makeSmokeSet, makeTaxonomyFile } from './gen'
import { Classifier } from './model'
import { serve } from './serve'
import { loadTaxonomy } from './taxonomy'

const USAGE = `usage:
  cli.js make-model  --out DIR --classes N --seed S [--input-size 64]
  cli.js make-images --out DIR --classes N --per-class M --seed S [--size 96] [--taxonomy FILE --fines-per-super K]
  cli.js extract     --model DIR --taxonomy FILE --images DIR --out DIR
                     [--sigmas 0,1.5,2] [--split test|train] [--attack none|pgd]
                     [--eps 0.03] [--delta 5] [--crop 224] [--threshold 0.25]
  cli.js serve       --model DIR [--threshold 0.25]
`

function parseFlags(argv: string[]): Record<string, string> {
  const flags: Record<string, string> = {}
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]
    if (!arg.startsWith('--')) throw new Error(`unexpected argument ${arg}`)
    const value = argv[i + 1]
    if (value === undefined || value.startsWith('--')) throw new Error(`flag ${arg} needs a value`)
    flags[arg.slice(2)] = value
    i++
  }
  return flags
}

function need(flags: Record<string, string>, name: string): string {
  const v = flags[name]
  if (v === undefined) throw new Error(`missing required flag --${name}`)
  return v
}

function intFlag(flags: Record<string, string>, name: string, fallback?: number): number {
  const raw = flags[name]
  if (raw === undefined) {
    if (fallback === undefined) throw new Error(`missing required flag --${name}`)
    return fallback
  }
  const v = Number(raw)
  if (!Number.isInteger(v)) throw new Error(`--${name} must be an integer`)
  return v
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2)
  if (!command || command === '--help' || command === '-h') {
    process.stderr.write(USAGE)
    return command ? 0 : 1
  }
  const flags = parseFlags(rest)

  if (command === 'make-model') {
    const out = need(flags, 'out')
    const model = Classifier.create(
      intFlag(flags, 'classes'),
      intFlag(flags, 'seed'),
      intFlag(flags, 'input-size', 64),
    )
    await model.save(out)
    process.stdout.write(
      `make-model: out=${out} classes=${model.meta.classes} input=${model.meta.inputSize}\n`,
    )
    return 0
  }

  if (command === 'make-images') {
    const out = need(flags, 'out')
    const classes = intFlag(flags, 'classes')
    const files = makeSmokeSet(
      out, classes, intFlag(flags, 'per-class'), intFlag(flags, 'seed'),
      intFlag(flags, 'size', 96),
    )
    if (flags.taxonomy) {
      makeTaxonomyFile(classes, intFlag(flags, 'fines-per-super', 2), flags.taxonomy)
    }
    process.stdout.write(`make-images: out=${out} images=${files.length}\n`)
    return 0
  }

  if (command === 'extract') {
    const attack = flags.attack ?? EXTRACT_DEFAULTS.attack
    if (attack === 'autoattack') {
      throw new Error('autoattack requires an attack toolbox that is not available offline; use --attack pgd')
    }
    if (attack !== 'none' && attack !== 'pgd') throw new Error(`unknown attack ${attack}`)
    const split = (flags.split ?? EXTRACT_DEFAULTS.split) as 'train' | 'test'
    if (split !== 'train' && split !== 'test') throw new Error(`bad --split ${split}`)
    const model = await Classifier.load(need(flags, 'model'))
    const result = extract({
      model,
      taxonomy: loadTaxonomy(need(flags, 'taxonomy')),
      inputs: discoverInputs(need(flags, 'images')),
      outDir: need(flags, 'out'),
      sigmas: (flags.sigmas ?? EXTRACT_DEFAULTS.sigmas.join(',')).split(',').map(Number),
      split,
      attack,
      epsilon: flags.eps === undefined ? EXTRACT_DEFAULTS.epsilon : Number(flags.eps),
      delta: intFlag(flags, 'delta', EXTRACT_DEFAULTS.delta),
      cropSize: intFlag(flags, 'crop', EXTRACT_DEFAULTS.cropSize),
      scoreThreshold:
        flags.threshold === undefined
          ? EXTRACT_DEFAULTS.scoreThreshold
          : Number(flags.threshold),
    })
    process.stdout.write(
      `extract: records=${result.records.length} manifest=${result.manifestPath}\n`,
    )
    return 0
  }

  if (command === 'serve') {
    const model = await Classifier.load(need(flags, 'model'))
    await serve(model, {
      scoreThreshold: flags.threshold === undefined ? undefined : Number(flags.threshold),
    })
    return 0
  }

  process.stderr.write(USAGE)
  throw new Error(`unknown command ${command}`)
}

main().then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`)
    process.exit(err && (err as { validation?: boolean }).validation ? 1 : 2)
  },
)
